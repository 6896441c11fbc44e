"""Command-line client.

The CLI parses arguments and the config file, sends the run to the HTTP
service (in-process by default, or a remote one with --server) and writes
the returned report, CSV traces and metadata.

Exit codes: 0 no failing verdict, 1 some verdict failed, 2 execution error.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import warnings
from pathlib import Path

from .config import SUBCOMMAND_TESTS, ConfigError, parse_config
from .reports import write_outputs

OUT_ENV = "VOLTERRA_OBS_OUT"
DEFAULT_OUT = "volterra_obs_out"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment config (default: fracdiff model)")
    common.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--grid-scale", type=float, default=1.0, metavar="FLOAT",
                        help="multiplier on grid sizes (default 1.0)")
    common.add_argument("--quick", action="store_true", help="halve grids and use cheaper quadratures")
    common.add_argument("--server", metavar="URL", help="run on a remote service instead of in-process")

    p = argparse.ArgumentParser(prog="volterra-obs", description="Admissibility experiments for Volterra systems.")
    sub = p.add_subparsers(dest="subcommand", required=True)
    helps = {
        "kernel-analyze": "certify a kernel (regularity, sector angle, growth)",
        "scalar-solve": "scalar resolvent s(t, mu) by both engines, growth check",
        "subordinate": "subordination kernels v_t and their norms",
        "admissibility": "resolvent, Zwart, Gram, transfer and weighted-norm tests",
        "carleson": "Carleson test for sum |c_n|^2 delta_{-lambda_n}",
        "fracdiff": "full pipeline for the fractional diffusion model",
    }
    for name in SUBCOMMAND_TESTS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return p


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        # starlette's in-process client warns about its httpx backend
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _check_writable(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=out, prefix=".probe"):
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not args.grid_scale > 0:
        _err("error: --grid-scale must be positive")
        return 2

    cfg_data = None
    out_dir = None
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            _err(f"error: cannot read config: {exc}")
            return 2
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            _err(f"error: invalid config {args.config}")
            for e in exc.errors:
                _err(f"  {e['path']}: {e['message']}")
            return 2
        cfg_data = cfg.model_dump(mode="json", exclude={"output"})
        out_dir = cfg.output.dir
        write_csv = cfg.output.csv
    else:
        write_csv = True
    out = Path(args.out or os.environ.get(OUT_ENV) or out_dir or DEFAULT_OUT)
    try:
        _check_writable(out)
    except OSError as exc:
        _err(f"error: output directory {out} is not writable: {exc}")
        return 2

    body = {"config": cfg_data, "grid_scale": args.grid_scale, "quick": args.quick}
    try:
        with _client(args.server) as client:
            resp = client.post(f"/run/{args.subcommand}", json=body)
    except Exception as exc:
        _err(f"error: run failed: {type(exc).__name__}: {exc}")
        return 2
    if resp.status_code != 200:
        _err(f"error: service returned {resp.status_code}: {resp.text}")
        return 2
    result = resp.json()
    if not write_csv:
        result["csv"] = {}
    try:
        paths = write_outputs(result, out)
    except OSError as exc:
        _err(f"error: cannot write outputs: {exc}")
        return 2

    for r in result["report"]["results"]:
        line = f"{r['id']}: {r['status']}"
        if r["status"] == "error":
            line += f" ({r['data'].get('error', '')})"
        print(line)
    print(f"report: {paths[0]}")
    return int(result["exit_code"])


if __name__ == "__main__":
    sys.exit(main())
