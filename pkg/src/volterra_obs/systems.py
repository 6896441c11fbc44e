"""Truncated diagonal operator models with scalar output.

A = diag(lambda_n) in an orthonormal (Riesz) eigenbasis, C e_n = c_n.  The
Volterra solution family acts mode-wise, S(t) e_n = s(t, -lambda_n) e_n.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import KernelSpec
from .laplace import AccuracyError, DEFAULT_TOL
from .scalar_volterra import oracle_table, s_laplace_table

__all__ = [
    "DiagonalSystem",
    "StateVector",
    "SystemError",
    "ResolventSingularityError",
    "constructed_system",
    "semigroup_apply",
    "solution_family_apply",
    "s_modes",
    "transfer_H_coeffs",
    "transfer_H_norms",
    "resolvent_residual",
    "resolvent_CR_norm",
    "graded_nodes",
]


class SystemError(ValueError):
    pass


class ResolventSingularityError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class StateVector:
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise SystemError("state coordinates must be a finite 1-d sequence")
        object.__setattr__(self, "coeffs", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __len__(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True, eq=False)
class DiagonalSystem:
    """Diagonal model: eigenvalues in -Sigma_omega, scalar observation coefficients.

    ``family(N)`` (optional) rebuilds the same model with N modes, which the
    divergence-trend tests use for N-refinement.
    """

    eigenvalues: np.ndarray
    obs_coeffs: np.ndarray
    sector_angle: float | None = None
    initial_state: np.ndarray | None = None
    family: Callable[[int], "DiagonalSystem"] | None = None
    label: str = "diagonal"

    def __post_init__(self) -> None:
        ev = np.atleast_1d(np.asarray(self.eigenvalues, dtype=complex))
        c = np.atleast_1d(np.asarray(self.obs_coeffs, dtype=complex))
        if ev.ndim != 1 or ev.size < 1:
            raise SystemError("need at least one eigenvalue")
        if c.shape != ev.shape:
            raise SystemError("obs_coeffs and eigenvalues differ in length")
        if not np.all(ev.real < 0):
            raise SystemError("eigenvalues must have negative real part (exponential stability)")
        args = np.abs(np.angle(-ev))
        omega = self.sector_angle
        if omega is None:
            omega = max(0.01, float(np.max(args)) + 0.01)
        if not 0 < omega < math.pi:
            raise SystemError("sector angle must lie in (0, pi)")
        if np.any(args >= omega):
            raise SystemError("every eigenvalue must satisfy |arg(-lambda_n)| < omega")
        x0 = self.initial_state
        x0 = np.full(ev.size, 1.0 / math.sqrt(ev.size), dtype=complex) if x0 is None else np.asarray(x0, dtype=complex)
        if x0.shape != ev.shape:
            raise SystemError("initial state has the wrong length")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "obs_coeffs", c)
        object.__setattr__(self, "sector_angle", float(omega))
        object.__setattr__(self, "initial_state", x0)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def mu(self) -> np.ndarray:
        return -self.eigenvalues

    @property
    def stability_margin(self) -> float:
        return float(-np.max(self.eigenvalues.real))

    @property
    def obs_bound(self) -> float:
        """M with |c_n| <= M (1 + |lambda_n|)."""
        return float(np.max(np.abs(self.obs_coeffs) / (1.0 + np.abs(self.eigenvalues))))

    def with_modes(self, n: int) -> "DiagonalSystem":
        if self.family is None:
            raise SystemError("system has no generator for other truncations")
        return self.family(n)

    def describe(self) -> dict:
        return {
            "label": self.label,
            "n_modes": self.n_modes,
            "sector_angle": self.sector_angle,
            "stability_margin": self.stability_margin,
            "obs_bound": self.obs_bound,
        }


def constructed_system(n: int, c_power: float = 0.0, label: str | None = None) -> DiagonalSystem:
    """lambda_n = -n, c_n = n^c_power, n = 1..N."""
    idx = np.arange(1, n + 1, dtype=float)
    return DiagonalSystem(
        -idx,
        idx**c_power,
        family=lambda m: constructed_system(m, c_power, label),
        label=label or f"lambda_n=-n, c_n=n^{c_power:g}",
    )


def _as_state(sys: DiagonalSystem, x) -> StateVector:
    if x is None:
        x = sys.initial_state
    if not isinstance(x, StateVector):
        x = StateVector(x)
    if len(x) != sys.n_modes:
        raise SystemError("state length does not match the system")
    return x


def semigroup_apply(sys: DiagonalSystem, t: float, x=None) -> StateVector:
    if t < 0:
        raise ValueError("t must be non-negative")
    x = _as_state(sys, x)
    return StateVector(x.coeffs * np.exp(sys.eigenvalues * t))


# cache of s(t, mu) tables keyed by exact parameter bytes
_S_CACHE: dict[tuple, np.ndarray] = {}
_S_LOCK = threading.Lock()
_S_CACHE_MAX = 256


def s_modes(k: KernelSpec, mu: np.ndarray, t: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Cached table s(t_i, mu_j) from the Laplace engine (t = 0 rows are 1)."""
    mu = np.ascontiguousarray(np.atleast_1d(mu), dtype=complex)
    t = np.ascontiguousarray(np.atleast_1d(t), dtype=float)
    key = (k.key, id(k), mu.tobytes(), t.tobytes(), tol)
    with _S_LOCK:
        hit = _S_CACHE.get(key)
    if hit is not None:
        return hit
    out = np.ones((t.size, mu.size), dtype=complex)
    pos = t > 0
    if pos.any():
        out[pos] = s_laplace_table(k, mu, t[pos], tol=tol)
    out.setflags(write=False)
    with _S_LOCK:
        if len(_S_CACHE) >= _S_CACHE_MAX:
            _S_CACHE.pop(next(iter(_S_CACHE)))
        _S_CACHE.setdefault(key, out)
    return out


def solution_family_apply(
    sys: DiagonalSystem,
    k: KernelSpec,
    t: float,
    x=None,
    cross_check: bool = True,
    check_tol: float = 1e-6,
) -> StateVector:
    """S(t) x mode-wise; the oracle re-solves a few modes as a cross-check."""
    if t < 0:
        raise ValueError("t must be non-negative")
    x = _as_state(sys, x)
    if t == 0:
        return StateVector(x.coeffs.copy())
    s = s_modes(k, sys.mu, np.array([float(t)]))[0]
    if cross_check and k.time_domain is not None and k.moments is not None:
        pick = np.unique(np.array([0, sys.n_modes // 2, sys.n_modes - 1]))
        ref, _ = oracle_table(k, sys.mu[pick], np.array([float(t)]))
        dev = np.abs(ref[0] - s[pick]) / np.maximum(np.abs(ref[0]), 1e-3)
        if np.max(dev) > check_tol:
            raise AccuracyError("inversion and time stepping disagree", float(np.max(dev)))
    return StateVector(x.coeffs * s)


def transfer_H_coeffs(sys: DiagonalSystem, k: KernelSpec, lam) -> np.ndarray:
    """Coefficients c_n / (lam (1 - a_hat(lam) lambda_n)); shape lam.shape + (N,)."""
    lam = np.asarray(lam, dtype=complex)
    if np.any(lam.real <= 0):
        raise ValueError("lambda must lie in the open right half-plane")
    ah = np.asarray(k.laplace(lam))[..., None]
    den = 1.0 - ah * sys.eigenvalues
    if np.any(np.abs(den) < 1e-12):
        raise ResolventSingularityError("1 - a_hat(lambda) lambda_n vanishes on a sample")
    return sys.obs_coeffs / (lam[..., None] * den)


def transfer_H_norms(sys: DiagonalSystem, k: KernelSpec, lam, chunk: int = 4096) -> np.ndarray:
    """l2 norms of C H(lam) for an array of lam (chunked)."""
    lam = np.asarray(lam, dtype=complex)
    flat = lam.ravel()
    out = np.empty(flat.size)
    for i in range(0, flat.size, chunk):
        out[i : i + chunk] = np.linalg.norm(transfer_H_coeffs(sys, k, flat[i : i + chunk]), axis=-1)
    return out.reshape(lam.shape)


def resolvent_CR_norm(sys: DiagonalSystem, lam: complex) -> float:
    lam = complex(lam)
    if lam.real <= 0:
        raise ValueError("Re lambda must be positive")
    return float(np.linalg.norm(sys.obs_coeffs / (lam - sys.eigenvalues)))


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

_GL16 = np.polynomial.legendre.leggauss(16)


def graded_nodes(a: float, b: float, decades: float = 14.0, per_decade: int = 3, n_gl: int = 16):
    """Gauss-Legendre nodes on [a, b] with geometric panels accumulating at a."""
    xg, wg = _GL16 if n_gl == 16 else np.polynomial.legendre.leggauss(n_gl)
    L = b - a
    npan = int(math.ceil(decades * per_decade))
    edges = np.concatenate([[0.0], L * np.logspace(-decades, 0, npan + 1)])
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * wg
    return a + x.ravel(), w.ravel()


def _singular_panel_nodes(L: float, rho: float, decades: float = 14.0, per_decade: int = 3):
    """Nodes/weights for int_0^L f(u) du with f ~ u^-rho at 0 (first panel substituted)."""
    xg, wg = _GL16
    npan = int(math.ceil(decades * per_decade))
    edges = L * np.logspace(-decades, 0, npan + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = (0.5 * (hi - lo) * xg + 0.5 * (hi + lo)).ravel()
    w = (0.5 * (hi - lo) * wg).ravel()
    p = 1.0 / (1.0 - rho) if rho > 0 else 1.0
    v = 0.5 * (xg + 1.0)
    e1 = edges[0]
    x0 = e1 * v**p
    w0 = e1 * p * v ** (p - 1.0) * 0.5 * wg
    return np.concatenate([x0, x]), np.concatenate([w0, w])


def resolvent_residual(
    sys: DiagonalSystem, k: KernelSpec, t: float, x=None, per_decade: int = 3
) -> float:
    """||S(t)x - x - int_0^t a(t-r) A S(r) x dr|| / ||x|| by product quadrature.

    The convolution integral is split at t/2: geometric panels toward r = 0
    (boundary layers of s) and toward r = t (kernel singularity).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if k.time_domain is None:
        raise ValueError("resolvent_residual needs the kernel's time-domain form")
    x = _as_state(sys, x)
    half = 0.5 * t
    r_left, w_left = graded_nodes(0.0, half, per_decade=per_decade)
    u_right, w_right = _singular_panel_nodes(half, k.singularity_exponent, per_decade=per_decade)
    r_right = t - u_right
    r_all = np.concatenate([r_left, r_right, [t]])
    S = s_modes(k, sys.mu, r_all)
    a_left = k.time_domain(t - r_left)
    a_right = k.time_domain(u_right)
    integ = (w_left * a_left) @ S[: r_left.size] + (w_right * a_right) @ S[r_left.size : -1]
    st = S[-1]
    # A S(r) e_n = lambda_n s(r, mu_n) e_n
    res = x.coeffs * (st - 1.0 - sys.eigenvalues * integ)
    nx = x.norm
    return float(np.linalg.norm(res) / nx) if nx > 0 else 0.0
