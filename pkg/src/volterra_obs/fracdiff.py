"""Distributed-order time-fractional diffusion on an interval.

omega D^alpha x + D^beta x = A x with A the Dirichlet Laplacian on (0, L),
written as a Volterra equation with a_hat(lam) = lam^-alpha / (omega + lam^(beta-alpha)).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .admissibility import (
    carleson_test,
    gram_admissibility_constant,
    transfer_bound_check,
    weighted_norm_profile,
)
from .kernels import KernelSpec, builtin_kernel, certify_kernel
from .systems import DiagonalSystem, resolvent_residual, s_modes

__all__ = [
    "FracDiffConfig",
    "Observation",
    "build_kernel",
    "build_system",
    "output_trace",
    "run_pipeline",
    "DEFAULT_X0",
]

DEFAULT_X0 = 0.707106
OBSERVATION_KINDS = ("point_value", "boundary_flux", "explicit")


@dataclass(frozen=True)
class Observation:
    kind: str = "point_value"
    x0: float = DEFAULT_X0
    coeffs: tuple = ()

    def __post_init__(self) -> None:
        if self.kind not in OBSERVATION_KINDS:
            raise ValueError(f"unknown observation {self.kind!r}; expected one of {OBSERVATION_KINDS}")


@dataclass(frozen=True)
class FracDiffConfig:
    alpha: float = 0.2
    beta: float = 0.9
    omega_coef: float = 1.0
    n_modes: int = 32
    observation: Observation = field(default_factory=Observation)
    domain_length: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < 2 * self.alpha < self.beta <= 1:
            raise ValueError("parameters must satisfy 0 < 2 alpha < beta <= 1")
        if not self.omega_coef > 0:
            raise ValueError("omega_coef must be positive")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValueError("n_modes must be a positive integer")
        if not self.domain_length > 0:
            raise ValueError("domain_length must be positive")
        ob = self.observation
        if ob.kind == "point_value" and not 0 <= ob.x0 <= self.domain_length:
            raise ValueError("observation point must lie in [0, L]")
        if ob.kind == "explicit" and len(ob.coeffs) < self.n_modes:
            raise ValueError("explicit observation needs at least n_modes coefficients")

    def with_modes(self, n: int) -> "FracDiffConfig":
        return FracDiffConfig(self.alpha, self.beta, self.omega_coef, n, self.observation, self.domain_length)


def build_kernel(cfg: FracDiffConfig) -> KernelSpec:
    return builtin_kernel("distributed_order", {"alpha": cfg.alpha, "beta": cfg.beta, "omega": cfg.omega_coef})


def build_system(cfg: FracDiffConfig) -> DiagonalSystem:
    """Dirichlet Laplacian eigenbasis sqrt(2/L) sin(n pi x / L)."""
    L = cfg.domain_length
    n = np.arange(1, cfg.n_modes + 1, dtype=float)
    kn = n * math.pi / L
    ob = cfg.observation
    if ob.kind == "point_value":
        c = math.sqrt(2.0 / L) * np.sin(kn * ob.x0)
    elif ob.kind == "boundary_flux":
        c = math.sqrt(2.0 / L) * kn
    else:
        c = np.asarray(ob.coeffs[: cfg.n_modes], dtype=complex)
    return DiagonalSystem(
        -(kn**2),
        c,
        family=lambda m: build_system(cfg.with_modes(m)),
        label=f"dirichlet_laplacian[{ob.kind}]",
    )


def output_trace(sys: DiagonalSystem, k: KernelSpec | None, t) -> np.ndarray:
    """y(t) = sum_n c_n s(t, mu_n) x0_n."""
    t = np.asarray(t, dtype=float)
    coef = sys.obs_coeffs * sys.initial_state
    if k is None:
        return np.exp(np.outer(t, sys.eigenvalues)) @ coef
    return s_modes(k, sys.mu, t) @ coef


_DEPENDS = {
    "kernel_certification": (),
    "carleson": (),
    "semigroup_gram": (),
    "transfer_bound": ("kernel_certification", "semigroup_gram"),
    "volterra_gram": ("kernel_certification",),
    "resolvent_residual": ("kernel_certification",),
    "dyadic_reconstruction": ("kernel_certification",),
}


def run_pipeline(
    cfg: FracDiffConfig,
    t0: float = 1.0,
    kernel: KernelSpec | None = None,
    residual_times=(0.25, 0.5, 1.0),
    residual_tol: float = 1e-5,
    gram_growth_tol: float = 0.05,
    trace_times=None,
    quick: bool = False,
) -> dict[str, Any]:
    """Run every stage, recording per-stage status pass/fail/blocked/error.

    ``kernel`` overrides the distributed-order kernel (e.g. constant_one for
    the semigroup degeneracy check).  ``quick`` uses a cheaper time
    quadrature for the transfer integral.
    """
    k = kernel if kernel is not None else build_kernel(cfg)
    sys = build_system(cfg)
    stages: dict[str, dict] = {}

    def run(name, fn):
        blocked = [d for d in _DEPENDS[name] if stages[d]["status"] in ("error", "blocked")]
        if blocked:
            stages[name] = {"status": "blocked", "blocked_by": blocked}
            return
        t_start = time.perf_counter()
        try:
            status, data = fn()
            stages[name] = {"status": status, **data}
        except Exception as exc:  # recorded, downstream stages are blocked
            stages[name] = {"status": "error", "error": f"{type(exc).__name__}: {exc}"}
        stages[name]["_seconds"] = time.perf_counter() - t_start

    def certification():
        cert = certify_kernel(k).to_dict()
        flags = cert["pass_flags"]
        need = ("regularity_finite", "regularity_stable", "angle_below_half_pi", "growth_bound")
        return ("pass" if all(flags[f] for f in need) else "fail"), {"certificate": cert}

    def carleson():
        rep = carleson_test(sys)
        return rep.verdict, {"report": rep.to_dict()}

    def sg_gram():
        return "pass", {"constant_inf": gram_admissibility_constant(sys, None, math.inf),
                        "constant_t0": gram_admissibility_constant(sys, None, t0)}

    def transfer():
        out = transfer_bound_check(sys, k, t0, n_gl=4 if quick else 8)
        return ("pass" if out["holds"] else "fail"), {"result": out}

    def v_gram():
        g1 = gram_admissibility_constant(sys, k, t0)
        sys2 = sys.with_modes(2 * sys.n_modes)
        g2 = gram_admissibility_constant(sys2, k, t0)
        growth = g2 / g1 - 1.0 if g1 > 0 else 0.0
        data = {"constant": g1, "constant_2n": g2, "relative_growth": growth, "n_modes": [sys.n_modes, sys2.n_modes]}
        if kernel is not None and kernel.homogeneity == 0:
            data["semigroup_constant_t0"] = gram_admissibility_constant(sys, None, t0)
        return ("pass" if growth <= gram_growth_tol else "fail"), data

    def residual():
        vals = {str(t): resolvent_residual(sys, k, float(t)) for t in residual_times}
        worst = max(vals.values())
        return ("pass" if worst <= residual_tol else "fail"), {"residuals": vals, "tolerance": residual_tol}

    def dyadic():
        out = weighted_norm_profile(sys, k, t0=t0, r_values=[1.0, 4.0, 16.0, 64.0])
        d = out["dyadic"]
        ok = d["relative_difference"] <= 0.05 and d["bounds_hold"]
        return ("pass" if ok else "fail"), {"dyadic": {kk: v for kk, v in d.items() if kk not in ("pieces", "piece_bounds")},
                                            "profile": out["profile"]}

    run("kernel_certification", certification)
    run("carleson", carleson)
    run("semigroup_gram", sg_gram)
    run("transfer_bound", transfer)
    run("volterra_gram", v_gram)
    run("resolvent_residual", residual)
    run("dyadic_reconstruction", dyadic)

    tt = np.linspace(0.0, t0, 65) if trace_times is None else np.asarray(trace_times, dtype=float)
    y = output_trace(sys, k, tt)
    statuses = [s["status"] for s in stages.values()]
    if "error" in statuses or "blocked" in statuses:
        overall = "error"
    elif "fail" in statuses:
        overall = "fail"
    elif "inconclusive" in statuses:
        overall = "inconclusive"
    else:
        overall = "pass"
    return {
        "overall": overall,
        "kernel": {"name": k.name, "params": dict(k.params), "singularity_exponent": k.singularity_exponent},
        "system": sys.describe(),
        "t0": t0,
        "stages": stages,
        "trace": {"t": tt, "y": y},
    }
