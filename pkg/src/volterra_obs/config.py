"""Experiment configuration (JSON) and its validation.

Shape::

    {
      "kernel": {"name": "distributed_order", "params": {"alpha": 0.2, "beta": 0.9, "omega": 1}},
      "system": {"type": "fracdiff", "n_modes": 32, "observation": {"kind": "point_value", "x0": 0.707106}},
      "tests": [{"id": "carleson", "params": {"n_factor": 2}}],
      "output": {"dir": "out", "csv": true}
    }

``kernel`` may be omitted for fracdiff systems (the model kernel is used).
Complex numbers are written as a number or a ``[re, im]`` pair.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Annotated, Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .kernels import BUILTIN_KERNELS, KernelParameterError, builtin_kernel

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "config_hash",
    "KNOWN_TESTS",
    "SUBCOMMAND_TESTS",
    "default_config",
]

Number = Union[float, tuple[float, float]]


def as_complex(v: Number) -> complex:
    return complex(v[0], v[1]) if isinstance(v, (tuple, list)) else complex(v)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelRef(_Strict):
    name: Literal["constant_one", "fractional_power", "distributed_order"]
    params: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        try:
            builtin_kernel(self.name, self.params)
        except KernelParameterError as exc:
            raise ValueError(str(exc)) from None
        return self

    def build(self):
        return builtin_kernel(self.name, self.params)


class ObservationModel(_Strict):
    kind: Literal["point_value", "boundary_flux", "explicit"] = "point_value"
    x0: float = 0.707106
    coeffs: list[Number] = Field(default_factory=list)


class ConstructedSystem(_Strict):
    type: Literal["constructed"]
    n_modes: int = Field(16, ge=1, le=4096)
    c_power: float = 0.0


class FracDiffSystem(_Strict):
    type: Literal["fracdiff"]
    alpha: float = 0.2
    beta: float = 0.9
    omega_coef: float = Field(1.0, gt=0)
    n_modes: int = Field(32, ge=1, le=4096)
    observation: ObservationModel = Field(default_factory=ObservationModel)
    domain_length: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not 0 < 2 * self.alpha < self.beta <= 1:
            raise ValueError(
                f"fractional orders must satisfy 0 < 2*alpha < beta <= 1 (got alpha={self.alpha}, beta={self.beta})"
            )
        ob = self.observation
        if ob.kind == "explicit" and len(ob.coeffs) < self.n_modes:
            raise ValueError("explicit observation needs at least n_modes coefficients")
        if ob.kind == "point_value" and not 0 <= ob.x0 <= self.domain_length:
            raise ValueError("observation point must lie in [0, domain_length]")
        return self

    def to_fracdiff(self):
        from .fracdiff import FracDiffConfig, Observation

        ob = Observation(self.observation.kind, self.observation.x0,
                         tuple(as_complex(c) for c in self.observation.coeffs))
        return FracDiffConfig(self.alpha, self.beta, self.omega_coef, self.n_modes, ob, self.domain_length)


class ExplicitSystem(_Strict):
    type: Literal["explicit"]
    eigenvalues: list[Number] = Field(min_length=1)
    obs_coeffs: list[Number] = Field(min_length=1)
    initial_state: list[Number] | None = None
    sector_angle: float | None = Field(None, gt=0, lt=math.pi)

    @model_validator(mode="after")
    def _check(self):
        if len(self.eigenvalues) != len(self.obs_coeffs):
            raise ValueError("eigenvalues and obs_coeffs differ in length")
        if any(as_complex(v).real >= 0 for v in self.eigenvalues):
            raise ValueError("eigenvalues must have negative real part")
        if self.initial_state is not None and len(self.initial_state) != len(self.eigenvalues):
            raise ValueError("initial_state has the wrong length")
        return self


SystemConfig = Annotated[Union[ConstructedSystem, FracDiffSystem, ExplicitSystem], Field(discriminator="type")]

PosList = list[Annotated[float, Field(gt=0)]]


class KernelCertificateParams(_Strict):
    order: Literal[1, 2] = 1
    n_moduli: int = Field(200, ge=8)
    n_args: int = Field(181, ge=3)


class ScalarSolveParams(_Strict):
    mu: list[Number] = Field(default_factory=lambda: [1.0, 2.0, (1.0, 5.0)], min_length=1)
    t: PosList = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    engine: Literal["laplace", "oracle", "both"] = "both"
    agreement_tol: float = Field(1e-6, gt=0)

    @field_validator("mu")
    @classmethod
    def _mu(cls, v):
        for m in v:
            if abs(math.atan2(as_complex(m).imag, as_complex(m).real)) >= math.pi:
                raise ValueError("mu must not lie on the negative real axis")
        return v


class GrowthCheckParams(_Strict):
    gamma: float = Field(1.0, ge=0, le=1)
    t: PosList = Field(default_factory=lambda: [1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0], min_length=2)
    slope_tol: float = Field(0.05, gt=0)


class SubordinationParams(_Strict):
    t: PosList = Field(default_factory=lambda: [0.1, 1.0, 10.0], min_length=1)
    n_r: int = Field(2000, ge=50)
    l1_tol: float = Field(1e-3, gt=0)


class NecessaryParams(_Strict):
    n_factor: int = Field(4, ge=2)
    n_moduli: int = Field(200, ge=8)
    n_args: int = Field(181, ge=3)


class ZwartParams(_Strict):
    alpha: float = Field(1.0, ge=0.5)
    experimental: bool = False
    n_factor: int = Field(4, ge=2)
    n_r: int = Field(561, ge=8)

    @model_validator(mode="after")
    def _check(self):
        if self.alpha == 0.5 and not self.experimental:
            raise ValueError("alpha = 1/2 is an open case and requires experimental: true")
        return self


class CarlesonParams(_Strict):
    n_factor: int = Field(2, ge=2)


class GramParams(_Strict):
    t0: Union[Annotated[float, Field(gt=0)], Literal["inf"]] = "inf"
    semigroup: bool = True


class TransferParams(_Strict):
    t0: float = Field(1.0, gt=0)


class WeightedNormParams(_Strict):
    r: PosList = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0], min_length=1)
    t0: float = Field(1.0, gt=0)
    alpha: float = Field(1.0, gt=0.5)
    dyadic_tol: float = Field(0.05, gt=0)


class ResidualParams(_Strict):
    t: PosList = Field(default_factory=lambda: [0.25, 0.5, 1.0], min_length=1)
    tol: float = Field(1e-5, gt=0)


class FracDiffPipelineParams(_Strict):
    t0: float = Field(1.0, gt=0)


_PARAMS = {
    "kernel_certificate": KernelCertificateParams,
    "scalar_solve": ScalarSolveParams,
    "growth_check": GrowthCheckParams,
    "subordination": SubordinationParams,
    "necessary_condition": NecessaryParams,
    "zwart_condition": ZwartParams,
    "carleson": CarlesonParams,
    "gram": GramParams,
    "transfer_bound": TransferParams,
    "weighted_norm": WeightedNormParams,
    "resolvent_residual": ResidualParams,
    "fracdiff_pipeline": FracDiffPipelineParams,
}
KNOWN_TESTS = tuple(_PARAMS)

# tests that need a kernel and/or a system
_NEEDS_KERNEL = {"kernel_certificate", "scalar_solve", "growth_check", "subordination", "necessary_condition",
                 "zwart_condition", "transfer_bound", "resolvent_residual"}
_NEEDS_SYSTEM = {"necessary_condition", "zwart_condition", "carleson", "gram", "transfer_bound",
                 "weighted_norm", "resolvent_residual", "fracdiff_pipeline"}

SUBCOMMAND_TESTS = {
    "kernel-analyze": ("kernel_certificate",),
    "scalar-solve": ("scalar_solve", "growth_check"),
    "subordinate": ("subordination",),
    "admissibility": ("necessary_condition", "zwart_condition", "gram", "transfer_bound", "weighted_norm",
                      "resolvent_residual"),
    "carleson": ("carleson",),
    "fracdiff": ("fracdiff_pipeline",),
}


class TestSpec(_Strict):
    __test__ = False  # not a pytest class

    id: str
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("id")
    @classmethod
    def _known(cls, v):
        if v not in _PARAMS:
            raise ValueError(f"unknown test id {v!r}; known ids: {', '.join(KNOWN_TESTS)}")
        return v

    @model_validator(mode="after")
    def _params(self):
        try:
            self.typed_params()
        except ValidationError as exc:
            msgs = [f"params.{_loc(e['loc'])}: {e['msg']}" for e in exc.errors()]
            raise ValueError("; ".join(msgs)) from None
        return self

    def typed_params(self):
        return _PARAMS[self.id].model_validate(self.params)


class OutputConfig(_Strict):
    dir: str | None = None
    csv: bool = True


class ExperimentConfig(_Strict):
    kernel: KernelRef | None = None
    system: SystemConfig | None = None
    tests: list[TestSpec] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def resolved_kernel(self):
        if self.kernel is not None:
            return self.kernel.build()
        if isinstance(self.system, FracDiffSystem):
            from .fracdiff import build_kernel

            return build_kernel(self.system.to_fracdiff())
        return None

    def build_system(self):
        s = self.system
        if s is None:
            return None
        if isinstance(s, ConstructedSystem):
            from .systems import constructed_system

            return constructed_system(s.n_modes, s.c_power)
        if isinstance(s, FracDiffSystem):
            from .fracdiff import build_system

            return build_system(s.to_fracdiff())
        from .systems import DiagonalSystem

        x0 = None if s.initial_state is None else [as_complex(v) for v in s.initial_state]
        return DiagonalSystem([as_complex(v) for v in s.eigenvalues], [as_complex(v) for v in s.obs_coeffs],
                              sector_angle=s.sector_angle, initial_state=x0, label="explicit")

    def tests_for(self, subcommand: str) -> list[TestSpec]:
        allowed = SUBCOMMAND_TESTS[subcommand]
        chosen = [t for t in self.tests if t.id in allowed]
        if not chosen:
            chosen = [TestSpec(id=i) for i in allowed]
            if subcommand == "admissibility" and self.kernel is None and not isinstance(self.system, FracDiffSystem):
                chosen = [t for t in chosen if t.id not in _NEEDS_KERNEL]
        return chosen


class ConfigError(ValueError):
    """All problems found in a configuration, one entry per issue."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['path']}: {e['message']}" for e in errors))


def _loc(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out or "<root>"


def _semantic_errors(cfg: ExperimentConfig) -> list[dict]:
    errs = []
    has_kernel = cfg.kernel is not None or isinstance(cfg.system, FracDiffSystem)
    for i, t in enumerate(cfg.tests):
        if t.id in _NEEDS_KERNEL and not has_kernel:
            errs.append({"path": f"tests[{i}]", "message": f"test {t.id!r} needs a kernel"})
        if t.id in _NEEDS_SYSTEM and cfg.system is None:
            errs.append({"path": f"tests[{i}]", "message": f"test {t.id!r} needs a system"})
        if t.id == "fracdiff_pipeline" and cfg.system is not None and not isinstance(cfg.system, FracDiffSystem):
            errs.append({"path": f"tests[{i}]", "message": "fracdiff_pipeline needs a system of type 'fracdiff'"})
    return errs


def parse_config(text: str | bytes | dict) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    if isinstance(text, dict):
        data = text
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([{"path": "<json>", "message": f"{exc.msg} at line {exc.lineno}, column {exc.colno}",
                                "line": exc.lineno, "column": exc.colno}]) from None
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errs = [{"path": _loc(e["loc"]), "message": e["msg"].removeprefix("Value error, ")} for e in exc.errors()]
        raise ConfigError(errs) from None
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    return cfg


def default_config() -> ExperimentConfig:
    """The fracdiff model with its own kernel and default tests."""
    return ExperimentConfig.model_validate({"system": {"type": "fracdiff"}})


def config_hash(cfg: ExperimentConfig, extra: dict | None = None) -> str:
    payload = {"config": cfg.model_dump(mode="json", exclude={"output"}), "extra": extra or {}}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


KERNEL_NAMES = BUILTIN_KERNELS
