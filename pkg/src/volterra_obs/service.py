"""HTTP service exposing the experiment runner.

    uvicorn volterra_obs.service:app

POST /run/{subcommand} takes a RunRequest and returns a RunResponse whose
``report`` is the deterministic JSON report; the CLI writes it to disk.
"""

from __future__ import annotations

from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import KNOWN_TESTS, SUBCOMMAND_TESTS, ConfigError, default_config, parse_config
from .kernels import BUILTIN_KERNELS
from .runner import execute


class RunRequest(BaseModel):
    config: dict[str, Any] | None = None
    grid_scale: float = Field(1.0, gt=0)
    quick: bool = False


class RunResponse(BaseModel):
    exit_code: int
    report: dict[str, Any]
    csv: dict[str, str]
    metadata: dict[str, Any]


class ConfigErrorResponse(BaseModel):
    errors: list[dict[str, Any]]


class Health(BaseModel):
    status: str
    version: str


app = FastAPI(title="volterra_obs", version=__version__)

_KERNEL_PARAMS = {
    "constant_one": [],
    "fractional_power": ["beta"],
    "distributed_order": ["alpha", "beta", "omega"],
}


@app.get("/health", response_model=Health)
def health():
    return Health(status="ok", version=__version__)


@app.get("/kernels")
def kernels():
    return {name: {"params": _KERNEL_PARAMS[name]} for name in BUILTIN_KERNELS}


@app.get("/tests")
def tests():
    return {"subcommands": {k: list(v) for k, v in SUBCOMMAND_TESTS.items()}, "known_tests": list(KNOWN_TESTS)}


@app.post("/run/{subcommand}", response_model=RunResponse, responses={422: {"model": ConfigErrorResponse}})
def run(subcommand: str, req: RunRequest):
    if subcommand not in SUBCOMMAND_TESTS:
        raise HTTPException(status_code=404, detail=f"unknown subcommand {subcommand!r}")
    try:
        cfg = default_config() if req.config is None else parse_config(req.config)
    except ConfigError as exc:
        return JSONResponse(status_code=422, content={"errors": exc.errors})
    res = execute(cfg, subcommand, grid_scale=req.grid_scale, quick=req.quick)
    return RunResponse(exit_code=res["exit_code"], report=res["report"], csv=res["csv"], metadata=res["metadata"])
