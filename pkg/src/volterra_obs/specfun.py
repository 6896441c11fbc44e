"""Complex Gamma and two-parameter Mittag-Leffler functions.

The Mittag-Leffler function is evaluated by its Taylor series near the
origin and by a contour integral of its Laplace-domain representation

    E_{g,d}(z) = 1/(2 pi i) * int_C exp(s) s^(g-d) / (s^g - z) ds

further out.  The contour is a pair of rays ``r exp(+-i phi)`` joined by a
circular arc around the origin; poles of the integrand lying to the right
of the contour are added as residues.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MLParams",
    "PoleError",
    "ConvergenceError",
    "gamma",
    "rgamma",
    "loggamma",
    "mittag_leffler",
    "SERIES_RADIUS",
]

SERIES_RADIUS = 2.0
SERIES_MAX_CONDITION = 1e3
MAX_SERIES_TERMS = 2000

# Lanczos approximation, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)


class PoleError(ValueError):
    """Raised when Gamma is evaluated at a non-positive integer."""


class ConvergenceError(ArithmeticError):
    """Raised when a series or quadrature misses its accuracy target."""


@dataclass(frozen=True)
class MLParams:
    """Parameters (gamma_exp, delta_exp) of E_{gamma, delta}."""

    gamma_exp: float
    delta_exp: float

    def __post_init__(self) -> None:
        if not (self.gamma_exp > 0 and self.delta_exp > 0):
            raise ValueError(
                f"Mittag-Leffler parameters must be positive, got "
                f"({self.gamma_exp}, {self.delta_exp})"
            )


def _is_pole(z: complex) -> bool:
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


def _loggamma_right(z: np.ndarray) -> np.ndarray:
    # valid for Re z >= 1/2
    z = z - 1.0
    x = np.full(z.shape, _LANCZOS_COEF[0], dtype=complex)
    for i in range(1, len(_LANCZOS_COEF)):
        x = x + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return 0.5 * math.log(2 * math.pi) + (z + 0.5) * np.log(t) - t + np.log(x)


def loggamma(z):
    """Logarithm of Gamma (some branch; exp(loggamma(z)) == gamma(z)).

    Accepts scalars or arrays.  Non-positive integers raise ``PoleError``.
    """
    arr = np.asarray(z, dtype=complex)
    flat = arr.ravel()
    if any(_is_pole(complex(v)) for v in flat):
        raise PoleError("Gamma has a pole at a non-positive integer")
    out = np.empty_like(flat)
    right = flat.real >= 0.5
    if right.any():
        out[right] = _loggamma_right(flat[right])
    left = ~right
    if left.any():
        zl = flat[left]
        # reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
        out[left] = (
            math.log(math.pi) - np.log(np.sin(np.pi * zl)) - _loggamma_right(1.0 - zl)
        )
    out = out.reshape(arr.shape)
    return complex(out) if np.ndim(z) == 0 else out


def gamma(z):
    """Gamma function for complex arguments (scalar or array)."""
    arr = np.asarray(z, dtype=complex)
    flat = arr.ravel()
    if any(_is_pole(complex(v)) for v in flat):
        raise PoleError("Gamma has a pole at a non-positive integer")
    out = np.empty_like(flat)
    right = flat.real >= 0.5
    if right.any():
        out[right] = np.exp(_loggamma_right(flat[right]))
    left = ~right
    if left.any():
        zl = flat[left]
        out[left] = np.pi / (np.sin(np.pi * zl) * np.exp(_loggamma_right(1.0 - zl)))
    out = out.reshape(arr.shape)
    # real arguments give real results
    if np.isrealobj(z):
        out = out.real
        return float(out) if np.ndim(z) == 0 else out
    return complex(out) if np.ndim(z) == 0 else out


def rgamma(z):
    """Reciprocal Gamma, entire: zero at the non-positive integers."""
    arr = np.asarray(z, dtype=complex)
    flat = arr.ravel()
    out = np.zeros_like(flat)
    ok = np.array([not _is_pole(complex(v)) for v in flat], dtype=bool)
    if ok.any():
        vals = flat[ok]
        right = vals.real >= 0.5
        res = np.empty_like(vals)
        res[right] = np.exp(-_loggamma_right(vals[right]))
        left = ~right
        res[left] = np.sin(np.pi * vals[left]) * np.exp(_loggamma_right(1.0 - vals[left])) / np.pi
        out[ok] = res
    out = out.reshape(arr.shape)
    return complex(out) if np.ndim(z) == 0 else out


# ---------------------------------------------------------------------------
# Mittag-Leffler
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _series_coefficients(g: float, d: float, radius: float) -> np.ndarray:
    """1/Gamma(g k + d) up to the point where radius^k / Gamma is negligible."""
    k = np.arange(MAX_SERIES_TERMS)
    logc = -np.real(loggamma(g * k + d))
    logterm = logc + k * math.log(max(radius, 1e-300))
    peak = np.max(logterm)
    # keep terms until they fall 40 (natural-log units) below the largest
    below = np.nonzero((logterm < peak - 40.0) & (k > np.argmax(logterm)))[0]
    if below.size == 0:
        raise ConvergenceError(
            f"Mittag-Leffler series for ({g}, {d}) needs more than "
            f"{MAX_SERIES_TERMS} terms at radius {radius}"
        )
    n = int(below[0]) + 1
    return np.exp(logc[:n])


def _ml_series(g: float, d: float, z: np.ndarray, condition: bool = False):
    """Series value; with ``condition`` also sum |c_k z^k| / |value| per point."""
    if z.size == 0:
        return (z.astype(complex), np.ones(z.shape)) if condition else z.astype(complex)
    radius = float(np.max(np.abs(z)))
    coef = _series_coefficients(g, d, max(radius, 1e-3))
    # Horner evaluation of the series truncated at the worst-case radius
    out = np.zeros(z.shape, dtype=complex)
    for c in coef[::-1]:
        out = out * z + c
    if not condition:
        return out
    az = np.abs(z)
    absum = np.zeros(z.shape)
    for c in coef[::-1]:
        absum = absum * az + c
    return out, absum / np.maximum(np.abs(out), 1e-300)


@lru_cache(maxsize=16)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _ray_nodes(rho: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights in r on [rho, inf) for the ray integral at angle phi.

    Panels grow geometrically from ``rho`` and are capped in length so the
    oscillation exp(i r sin phi) stays resolved; the ray ends once
    exp(r cos phi) has dropped below 1e-18 relative to exp(rho cos phi).
    """
    decay = -math.cos(phi)
    r_end = rho + 42.0 / decay
    cap = min(2.0, math.pi / max(math.sin(phi), 1e-3))
    edges = [rho]
    while edges[-1] < r_end:
        edges.append(edges[-1] + min(0.5 * edges[-1], cap))
    edges = np.array(edges)
    x, w = _gauss_legendre(16)
    a, b = edges[:-1, None], edges[1:, None]
    r = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
    wr = 0.5 * (b - a) * w[None, :]
    return r.ravel(), wr.ravel()


@lru_cache(maxsize=256)
def _contour_rule(g: float, d: float, rho: float, phi: float):
    """Weights W and values S such that the contour integral is sum W/(S - z)."""
    r, wr = _ray_nodes(rho, phi)
    xa, wa = _gauss_legendre(48)
    theta = phi * xa
    s_arc = rho * np.exp(1j * theta)
    w_arc = wa * phi * 1j * s_arc
    s_up = r * np.exp(1j * phi)
    s_dn = r * np.exp(-1j * phi)
    # contour orientation: in along the lower ray, around the arc, out along the upper ray
    s = np.concatenate([s_dn, s_arc, s_up])
    w = np.concatenate([-wr * np.exp(-1j * phi), w_arc, wr * np.exp(1j * phi)])
    f = np.exp(s) * s ** (g - d)
    weights = w * f / (2j * np.pi)
    return weights, s**g


def _pole_angles(g: float, argz: float) -> list[float]:
    """Arguments of the solutions of s^g = z on the principal sheet."""
    out = []
    jmax = int(math.ceil(g / 2.0)) + 1
    for j in range(-jmax, jmax + 1):
        a = (argz + 2 * math.pi * j) / g
        if -math.pi < a < math.pi:
            out.append(a)
    return out


def _choose_angle(pole_args: list[float]) -> float:
    candidates = np.linspace(0.6 * math.pi, 0.9 * math.pi, 31)
    if not pole_args:
        return 0.8 * math.pi
    pa = np.abs(np.asarray(pole_args))
    dist = np.min(np.abs(candidates[:, None] - pa[None, :]), axis=1)
    # prefer well-separated angles, then angles closer to pi (faster decay)
    score = np.minimum(dist, 0.1 * math.pi) + 1e-3 * candidates
    return float(candidates[np.argmax(score)])


def _ml_contour_one(g: float, d: float, z: complex) -> complex:
    rmod = abs(z) ** (1.0 / g)
    args = _pole_angles(g, math.atan2(z.imag, z.real))
    phi = _choose_angle(args)
    rho = min(1.0, 0.5 * rmod)
    weights, sg = _contour_rule(g, d, rho, phi)
    val = complex(np.sum(weights / (sg - z)))
    for a in args:
        if abs(a) < phi:
            sj = rmod * complex(math.cos(a), math.sin(a))
            val += sj ** (1.0 - d) * np.exp(sj) / g
    return val


def _ml_residues_only(g: int, d: int, z: np.ndarray) -> np.ndarray:
    # integer g >= d: the integrand is meromorphic, E is the sum of residues
    rmod = np.abs(z) ** (1.0 / g)
    argz = np.angle(z)
    out = np.zeros(z.shape, dtype=complex)
    for j in range(g):
        sj = rmod * np.exp(1j * (argz + 2 * np.pi * j) / g)
        out += sj ** (1 - d) * np.exp(sj) / g
    return out


def _ml_contour(g: float, d: float, z: np.ndarray) -> np.ndarray:
    if g == int(g) and d == int(d) and d <= g:
        return _ml_residues_only(int(g), int(d), z)
    out = np.empty(z.shape, dtype=complex)
    pole_free = np.zeros(z.shape, dtype=bool)
    for i, zi in enumerate(z):
        args = _pole_angles(g, math.atan2(zi.imag, zi.real))
        pole_free[i] = not args and abs(zi) ** (1.0 / g) > 2.0
    if pole_free.any():
        # shared nodes for every pole-free point: one matrix product
        weights, sg = _contour_rule(g, d, 1.0, 0.8 * math.pi)
        zs = z[pole_free]
        vals = np.empty(zs.shape, dtype=complex)
        for lo in range(0, zs.size, 2048):
            blk = zs[lo : lo + 2048]
            vals[lo : lo + 2048] = (1.0 / (sg[None, :] - blk[:, None])) @ weights
        out[pole_free] = vals
    for i in np.nonzero(~pole_free)[0]:
        out[i] = _ml_contour_one(g, d, complex(z[i]))
    return out


def mittag_leffler(p: MLParams | tuple[float, float], z, method: str = "auto"):
    """Two-parameter Mittag-Leffler function E_{gamma, delta}(z).

    ``method`` is ``"auto"`` (series for |z| <= 2 unless it cancels badly,
    contour otherwise), ``"series"`` or ``"contour"``.  The contour rule
    is meant for |z| beyond the series disc; forced onto small |z| with
    large delta it loses accuracy.  Scalars in, scalar out; arrays are
    evaluated elementwise.
    """
    if not isinstance(p, MLParams):
        p = MLParams(*p)
    g, d = float(p.gamma_exp), float(p.delta_exp)
    arr = np.asarray(z, dtype=complex)
    flat = arr.ravel()
    # evaluate on the closed upper half-plane, conjugate back
    lower = flat.imag < 0
    zz = np.where(lower, np.conj(flat), flat)
    out = np.empty_like(zz)
    if method == "series":
        use_series = np.ones(zz.shape, dtype=bool)
    elif method == "contour":
        use_series = np.abs(zz) == 0
    elif method == "auto":
        use_series = np.abs(zz) <= SERIES_RADIUS
    else:
        raise ValueError(f"unknown method {method!r}")
    if use_series.any():
        if method == "auto":
            # cancellation in the series (small g near the switch radius) costs
            # log10(cond) digits; such points go to the contour instead
            idx = np.flatnonzero(use_series)
            try:
                vals, cond = _ml_series(g, d, zz[use_series], condition=True)
            except ConvergenceError:
                # too many terms for the budget (tiny g): contour for all of them
                vals, cond = np.zeros(idx.size, dtype=complex), np.full(idx.size, np.inf)
            bad = cond > SERIES_MAX_CONDITION
            out[idx[~bad]] = vals[~bad]
            use_series[idx[bad]] = False
        else:
            out[use_series] = _ml_series(g, d, zz[use_series])
    if (~use_series).any():
        # overflow surfaces as the non-finite check below
        with np.errstate(over="ignore", invalid="ignore"):
            out[~use_series] = _ml_contour(g, d, zz[~use_series])
    real_axis = zz.imag == 0
    out[real_axis] = out[real_axis].real
    out = np.where(lower, np.conj(out), out).reshape(arr.shape)
    if not np.all(np.isfinite(out)):
        raise ConvergenceError("Mittag-Leffler evaluation produced non-finite values")
    return complex(out) if np.ndim(z) == 0 else out
