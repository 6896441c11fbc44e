"""Scalar resolvent s(t, mu) and the subordination kernels v_t.

s solves s(t) + mu int_0^t a(t-r) s(r) dr = 1.  Two independent engines:

* ``s_via_laplace``: Bromwich inversion of sigma(lam, mu) = 1/(lam (1 + mu a_hat(lam)))
  on Re(lam) = 1/t.  Poles of sigma with known closed form are subtracted and
  added back as exact exponentials, so exponentially small values keep
  their relative accuracy.
* ``solve_scalar_oracle``: product integration (piecewise linear s, exact
  kernel moments) on a graded mesh, in increment form, with Richardson
  extrapolation over step halving.

v_t is the inverse Laplace transform of mu -> s(t, mu).  For kernels of
angle < pi/2 the mu-inversion can be done in closed form,

    v_t(r) = L^-1_lam[ exp(-r / a_hat(lam)) / (lam a_hat(lam)) ](t),

which is the default; the nested numerical mu-inversion is kept for
cross-checks (``method="nested"``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .kernels import KernelSpec, SectorGrid, sectorial_angle
from .laplace import DEFAULT_TOL, AccuracyError, bromwich_invert

__all__ = [
    "ScalarSolutionGrid",
    "SubordinationKernel",
    "HypothesisError",
    "MissingTimeDomainError",
    "PoorFitWarning",
    "s_laplace_table",
    "s_via_laplace",
    "solve_scalar_oracle",
    "oracle_table",
    "compute_v",
    "default_r_grid",
    "norm_scaling_fit",
    "s_growth_check",
]


class HypothesisError(ValueError):
    """A kernel does not satisfy the hypotheses of the requested construction."""


class MissingTimeDomainError(ValueError):
    pass


class PoorFitWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ScalarSolutionGrid:
    kernel: KernelSpec
    mu: complex
    t_samples: np.ndarray
    values: np.ndarray
    method: str
    error_estimate: float

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(v.real), float(v.imag)) for t, v in zip(self.t_samples, self.values)]


@dataclass(frozen=True, eq=False)
class SubordinationKernel:
    kernel: KernelSpec
    t: float
    r_samples: np.ndarray
    values: np.ndarray
    l1: float
    l2: float
    w11: float
    tail_bound: float = 0.0

    def to_rows(self) -> list[tuple[float, float]]:
        return [(float(r), float(v)) for r, v in zip(self.r_samples, self.values)]


# ---------------------------------------------------------------------------
# Laplace engine
# ---------------------------------------------------------------------------


def s_laplace_table(k: KernelSpec, mu, t, tol: float = DEFAULT_TOL, method: str = "line") -> np.ndarray:
    """s(t_i, mu_j) for 1-d arrays t (positive) and mu; shape (len(t), len(mu))."""
    mu = np.atleast_1d(np.asarray(mu, dtype=complex))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if k.resolvent_poles is not None and method == "line":
        p, res, mask = k.resolvent_poles(mu)
        p = np.where(mask, p, 0.0)
        res = np.where(mask, res, 0.0)
    else:
        p = np.zeros(mu.shape, dtype=complex)
        res = np.zeros(mu.shape, dtype=complex)
        mask = np.zeros(mu.shape, dtype=bool)
    # drop modes whose transform is exactly the subtracted pole part
    exact = mask & (k.homogeneity == 0.0)
    rest = ~exact
    out = np.zeros((t.size, mu.size), dtype=complex)
    if rest.any():
        mu_r, p_r, res_r = mu[rest], p[rest], res[rest]
        has = mask[rest]

        def F(lam):
            ah = k.laplace(lam)[..., None]
            lam_ = lam[..., None]
            sig = 1.0 / (lam_ * (1.0 + mu_r * ah))
            if has.any():
                sig = sig - np.where(has, res_r / (lam_ - p_r), 0.0)
            return sig

        out[:, rest] = bromwich_invert(F, t, tol=tol, method=method)
    out += np.where(mask, res, 0.0)[None, :] * np.exp(np.outer(t, p)) * mask[None, :]
    # s(t, 0) = 1 exactly
    out[:, mu == 0] = 1.0
    return out


def s_via_laplace(k: KernelSpec, mu, t, tol: float = DEFAULT_TOL, method: str = "line"):
    """s(t, mu) by Bromwich inversion with default abscissa 1/t.

    Scalar mu and t give a complex number; arrays give the (t, mu) table
    squeezed along scalar axes.
    """
    tab = s_laplace_table(k, mu, t, tol, method)
    if np.ndim(mu) == 0 and np.ndim(t) == 0:
        return complex(tab[0, 0])
    if np.ndim(mu) == 0:
        return tab[:, 0]
    if np.ndim(t) == 0:
        return tab[0]
    return tab


# ---------------------------------------------------------------------------
# product-integration oracle
# ---------------------------------------------------------------------------

_GL6 = np.polynomial.legendre.leggauss(6)
_ORACLE_STEPS = 2048


def _uniform_weights(k: KernelSpec, T: float, N: int) -> tuple[np.ndarray, np.ndarray]:
    """End weights wl[m], wr[m] of an interval at distance m (uniform mesh).

    The interval [t_j, t_j+1] seen from t_n (m = n - j) contributes wl[m] to
    s_j and wr[m] to s_{j+1}.
    """
    h = T / N
    m = np.arange(N + 2, dtype=float)
    if k.homogeneity is not None:
        # integer units keep constant-kernel weights exact
        A0, A1 = k.moments(m)
        scale = h ** (k.homogeneity + 1.0)
    else:
        A0, A1 = k.moments(m * h)
        A0 = A0 / h
        A1 = A1 / h**2
        scale = h
    dA0 = A0[1:] - A0[:-1]
    dA1 = A1[1:] - A1[:-1]
    mm = m[1:]
    wl = np.concatenate([[0.0], dA1 - (mm - 1.0) * dA0])
    wr = np.concatenate([[0.0], mm * dA0 - dA1])
    return wl * scale, wr * scale


def _march_uniform(wl: np.ndarray, wr: np.ndarray, N: int, mu: np.ndarray) -> np.ndarray:
    """Increment-form marching using the Toeplitz structure of the weights."""
    S = np.empty((N + 1, mu.size), dtype=complex)
    S[0] = 1.0
    c = np.zeros(N + 1)
    c[1:] = wl[1 : N + 1] + wr[2 : N + 2]
    dc = np.zeros(N + 1)
    dc[2:] = c[2:] - c[1:-1]
    w_diag = wr[1]
    for n in range(1, N + 1):
        if n == 1:
            acc = wl[1] * S[0]
        else:
            acc = (wl[n] - wl[n - 1]) * S[0] + (c[1] - w_diag) * S[n - 1]
            if n > 2:
                acc = acc + dc[n - 1 : 1 : -1] @ S[1 : n - 1]
        S[n] = (S[n - 1] - mu * acc) / (1.0 + mu * w_diag)
    return S


def _graded_weights(k: KernelSpec, t: np.ndarray) -> np.ndarray:
    N = t.size - 1
    W = np.zeros((N + 1, N + 1))
    xg, wg = _GL6
    rows = np.arange(1, N + 1)
    for block in np.array_split(rows, max(1, N // 96)):
        nn = np.concatenate([np.full(n, n) for n in block])
        jj = np.concatenate([np.arange(n) for n in block])
        x0 = t[nn] - t[jj]
        x1 = t[nn] - t[jj + 1]
        h = t[jj + 1] - t[jj]
        wl = np.empty(nn.size)
        wr = np.empty(nn.size)
        near = x1 < 4.0 * h
        if near.any():
            a00, a10 = k.moments(x0[near])
            a01, a11 = k.moments(x1[near])
            dA0 = a00 - a01
            dA1 = a10 - a11
            hn = h[near]
            wl[near] = (dA1 - x1[near] * dA0) / hn
            wr[near] = (x0[near] * dA0 - dA1) / hn
        far = ~near
        if far.any():
            lo, hi, hf = x1[far], x0[far], h[far]
            u = 0.5 * (hi - lo)[:, None] * xg[None, :] + 0.5 * (hi + lo)[:, None]
            au = k.time_domain(u) * (0.5 * (hi - lo))[:, None] * wg[None, :]
            wl[far] = np.sum(au * (u - lo[:, None]), axis=1) / hf
            wr[far] = np.sum(au * (hi[:, None] - u), axis=1) / hf
        # interval j contributes wl to s_j and wr to s_{j+1}
        np.add.at(W, (nn, jj), wl)
        np.add.at(W, (nn, jj + 1), wr)
    return W


@lru_cache(maxsize=24)
def _weights(k: KernelSpec, T: float, N: int, q: float):
    if q == 1.0:
        return _uniform_weights(k, T, N)
    W = _graded_weights(k, _mesh(T, N, q))
    D = W.copy()
    D[1:] -= W[:-1]
    return W, D


def _mesh(T: float, N: int, q: float) -> np.ndarray:
    return T * (np.arange(N + 1) / N) ** q


def _grading(k: KernelSpec) -> float:
    if k.homogeneity == 0.0:
        return 1.0
    return min(6.0, 2.0 / (1.0 - k.singularity_exponent))


def _march(W: np.ndarray, D: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Increment form of the product-integration equations."""
    N = W.shape[0] - 1
    S = np.empty((N + 1, mu.size), dtype=complex)
    S[0] = 1.0
    diag = np.diag(W)
    for n in range(1, N + 1):
        acc = D[n, :n] @ S[:n]
        S[n] = (S[n - 1] - mu * acc) / (1.0 + mu * diag[n])
    return S


def _interp(mesh_u: np.ndarray, S: np.ndarray, u: np.ndarray, width: int = 6) -> np.ndarray:
    """Local Lagrange interpolation of S (rows at mesh_u) to points u."""
    out = np.empty((u.size, S.shape[1]), dtype=complex)
    n = mesh_u.size
    for i, ui in enumerate(u):
        c = int(np.searchsorted(mesh_u, ui))
        lo = min(max(0, c - width // 2), n - width)
        idx = np.arange(lo, lo + width)
        xs = mesh_u[idx]
        hit = np.nonzero(xs == ui)[0]
        if hit.size:
            out[i] = S[idx[hit[0]]]
            continue
        L = np.ones(width)
        for a in range(width):
            for b in range(width):
                if a != b:
                    L[a] *= (ui - xs[b]) / (xs[a] - xs[b])
        out[i] = L @ S[idx]
    return out


def oracle_table(k: KernelSpec, mu, t_grid, n_steps: int = _ORACLE_STEPS) -> tuple[np.ndarray, np.ndarray]:
    """Time-stepping values and error estimates, each of shape (len(t), len(mu))."""
    if k.moments is None or k.time_domain is None:
        raise MissingTimeDomainError(f"kernel {k.name!r} has no time-domain form/moments")
    mu = np.atleast_1d(np.asarray(mu, dtype=complex))
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    T = float(np.max(t))
    if T == 0:
        return np.ones((t.size, mu.size), dtype=complex), np.zeros((t.size, mu.size))
    q = _grading(k)
    u = (t / T) ** (1.0 / q)
    if q == 1.0:
        n_steps = 2 * n_steps
        levels = [n_steps // 8, n_steps // 4, n_steps // 2, n_steps]
    else:
        levels = [n_steps // 2, n_steps]
    vals = []
    for N in levels:
        if q == 1.0:
            S = _march_uniform(*_weights(k, T, N, q), N, mu)
        else:
            S = _march(*_weights(k, T, N, q), mu)
        vals.append(_interp(np.arange(N + 1) / N, S, u))
    # Richardson on h^2, h^4, h^6
    table = [vals]
    for p in range(1, len(levels)):
        prev = table[-1]
        f = 4.0**p
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1.0) for i in range(len(prev) - 1)])
    best = table[-1][0]
    err = np.abs(best - table[-2][-1]) if len(levels) > 1 else np.zeros(best.shape)
    return best, err


def solve_scalar_oracle(
    k: KernelSpec, mu: complex, t_grid, n_steps: int = _ORACLE_STEPS, tol: float | None = None
) -> ScalarSolutionGrid:
    """Product-integration solution on [0, max t]; error from step halving.

    With ``tol`` set, a ``AccuracyError`` is raised when the step-halving
    estimate exceeds it.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be a sorted 1-d array")
    vals, err = oracle_table(k, [mu], t, n_steps)
    e = float(np.max(err))
    if tol is not None and e > tol:
        raise AccuracyError("step halving did not converge", e)
    return ScalarSolutionGrid(k, complex(mu), t, vals[:, 0], "time_step", e)


def laplace_solution_grid(k: KernelSpec, mu: complex, t_grid) -> ScalarSolutionGrid:
    t = np.asarray(t_grid, dtype=float)
    vals = s_laplace_table(k, [mu], t)[:, 0]
    return ScalarSolutionGrid(k, complex(mu), t, vals, "inversion", DEFAULT_TOL)


# ---------------------------------------------------------------------------
# subordination kernels
# ---------------------------------------------------------------------------


def default_r_grid(t: float, n: int = 2000) -> np.ndarray:
    hi = max(50.0 * math.sqrt(t), 50.0 * t)
    return np.concatenate([[0.0], np.geomspace(1e-4 * t, hi, n)])


def _check_angle(k: KernelSpec) -> None:
    theta = sectorial_angle(k)
    if theta.on_boundary and theta + 2 * theta.margin >= math.pi / 2 or theta >= math.pi / 2:
        raise HypothesisError(
            f"kernel {k.name!r} has sectorial angle {theta / math.pi:.4f} pi, not < pi/2; "
            "v_t is not a function (a = 1 gives a Dirac mass)"
        )


def _v_direct(k: KernelSpec, t: float, r: np.ndarray, tol: float) -> np.ndarray:
    def F(lam):
        ah = k.laplace(lam)[..., None]
        return np.exp(-r / ah) / (lam[..., None] * ah)

    return np.real(bromwich_invert(F, np.array([t]), tol=tol)[0])


def _v_nested(k: KernelSpec, t: float, r: np.ndarray, tol: float) -> np.ndarray:
    # v_t(r) = L^-1_mu[ s(t, mu) ](r), with s(t, mu) itself from inversion
    out = np.empty(r.size)
    for i, ri in enumerate(r):
        if ri <= 0:
            raise ValueError("nested inversion needs r > 0")

        def G(mu):
            return s_laplace_table(k, mu.ravel(), [t], tol=tol * 1e-2)[0].reshape(mu.shape)

        out[i] = np.real(bromwich_invert(G, ri, tol=tol))
    return out


def _norms(r: np.ndarray, v: np.ndarray) -> tuple[float, float, float, float]:
    l1 = float(np.trapezoid(np.abs(v), r))
    l2 = float(math.sqrt(np.trapezoid(v * v, r)))
    dv = np.gradient(v, r)
    w11 = l1 + float(np.trapezoid(np.abs(dv), r))
    # tail beyond the last sample: exponential fit through the last two points
    v1, v2 = abs(v[-2]), abs(v[-1])
    tail = 0.0
    if v2 > 0 and v1 > v2:
        rate = math.log(v1 / v2) / (r[-1] - r[-2])
        tail = v2 / rate
    elif v2 > 0:
        tail = math.inf
    return l1, l2, w11, tail


def compute_v(
    k: KernelSpec,
    t: float,
    r_grid=None,
    method: str = "direct",
    tol: float = DEFAULT_TOL,
    check: bool = True,
) -> SubordinationKernel:
    """Samples and norms of the subordination kernel v_t.

    Norms come from the trapezoid rule on the samples; W^{1,1} uses finite
    differences.  Refuses kernels whose angle is not below pi/2.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if check:
        _check_angle(k)
    r = default_r_grid(t) if r_grid is None else np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or np.any(np.diff(r) <= 0) or r[0] < 0:
        raise ValueError("r_grid must be sorted non-negative reals")
    if method == "direct":
        v = _v_direct(k, t, r, tol)
    elif method == "nested":
        v = _v_nested(k, t, r, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    l1, l2, w11, tail = _norms(r, v)
    return SubordinationKernel(k, float(t), r, v, l1, l2, w11, tail)


def _fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + icpt)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def _check_fit_grid(t: np.ndarray) -> None:
    decades = math.log10(t[-1] / t[0])
    if decades < 2 - 1e-9:
        raise ValueError("fit needs at least 2 decades of t")
    if t.size < 8 * decades * (1 - 1e-9) + 1:
        raise ValueError("fit needs at least 8 samples per decade")


def norm_scaling_fit(
    k: KernelSpec, norm: str, t_grid, branch: str = "small_t", norms: dict | None = None
) -> tuple[float, float]:
    """Least-squares slope of log ||v_t|| against log t, and r^2.

    ``branch`` selects t <= 1 (small_t) or t >= 1 (large_t) from t_grid.
    ``norms`` may carry precomputed {t: SubordinationKernel}.
    """
    if norm not in ("l1", "l2", "w11"):
        raise ValueError("norm must be l1, l2 or w11")
    t = np.sort(np.asarray(t_grid, dtype=float))
    if branch == "small_t":
        t = t[t <= 1.0 + 1e-12]
    elif branch == "large_t":
        t = t[t >= 1.0 - 1e-12]
    else:
        raise ValueError("branch must be small_t or large_t")
    _check_fit_grid(t)
    vals = []
    for ti in t:
        sk = norms.get(float(ti)) if norms else None
        if sk is None:
            sk = compute_v(k, float(ti))
            if norms is not None:
                norms[float(ti)] = sk
        vals.append(getattr(sk, norm))
    slope, r2 = _fit(t, np.array(vals))
    if r2 < 0.98:
        warnings.warn(f"poor log-log fit (r^2 = {r2:.4f})", PoorFitWarning, stacklevel=2)
    return slope, r2


def _sup_mu(k: KernelSpec, gamma_: float, t: float, mu: np.ndarray) -> float:
    vals = np.abs(mu**gamma_ * s_laplace_table(k, mu, [t])[0])
    i = int(np.argmax(vals))
    best = float(vals[i])
    # polish a real-axis maximum in log mu
    if np.all(mu.imag == 0) and 0 < i < mu.size - 1:
        lo, hi = math.log(mu[i - 1].real), math.log(mu[i + 1].real)

        def neg(x):
            m = math.exp(x)
            return -abs(m**gamma_ * s_laplace_table(k, [m], [t])[0, 0])

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def s_growth_check(
    k: KernelSpec, gamma: float, t_grid, mu_grid: SectorGrid | None = None
) -> dict:
    """sup over mu of |mu^gamma s(t, mu)| per t, with log-log slopes on both branches.

    The default mu grid is the positive real axis (moduli 1e-6..1e8).
    """
    if not 0 <= gamma <= 1:
        raise ValueError("gamma must lie in [0, 1]")
    t = np.sort(np.asarray(t_grid, dtype=float))
    if mu_grid is None:
        mu = np.geomspace(1e-6, 1e8, 561).astype(complex)
    else:
        mu = mu_grid.points().ravel()
    sups = np.array([_sup_mu(k, gamma, float(ti), mu) for ti in t])
    theta = float(sectorial_angle(k))
    out = {
        "t": t,
        "sup": sups,
        "predicted_slope": -2.0 * gamma * theta / math.pi,
        "slope_small_t": None,
        "slope_large_t": None,
    }
    small = t <= 1.0 + 1e-12
    large = t >= 1.0 - 1e-12
    if small.sum() >= 2:
        out["slope_small_t"] = _fit(t[small], sups[small])[0]
    if large.sum() >= 2:
        out["slope_large_t"] = _fit(t[large], sups[large])[0]
    out["slope"] = out["slope_small_t"] if out["slope_small_t"] is not None else out["slope_large_t"]
    return out
