"""Scalar convolution kernels and grid certificates of their hypotheses.

A kernel is given by its Laplace transform a_hat and (closed-form)
derivatives, optionally by its time-domain form and by the moments

    A0(x) = int_0^x a(u) du,    A1(x) = int_0^x u a(u) du

used for product integration.  Suprema over the right half-plane are
estimated on log-polar grids (``SectorGrid``); they are grid evidence, not
proofs.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, NamedTuple

import numpy as np
from numpy.polynomial import Chebyshev

from .specfun import MLParams, gamma, mittag_leffler

__all__ = [
    "KernelSpec",
    "SectorGrid",
    "KernelCertificate",
    "KernelParameterError",
    "MissingDerivativeError",
    "SectorAngle",
    "builtin_kernel",
    "BUILTIN_KERNELS",
    "laplace_derivative",
    "regularity_constants",
    "regularity_constant",
    "sectorial_angle",
    "growth_lower_bound",
    "sector_inequality_constant",
    "parabolicity_check",
    "certify_kernel",
]

BUILTIN_KERNELS = ("constant_one", "fractional_power", "distributed_order")


class KernelParameterError(ValueError):
    pass


class MissingDerivativeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SectorGrid:
    """Log-spaced moduli times equispaced arguments in |arg| <= half_angle - margin.

    With the default half_angle = pi/2 every point lies in the open right
    half-plane.  Larger half angles are used for sector inequalities.
    """

    moduli: np.ndarray
    arguments: np.ndarray
    margin: float
    half_angle: float = math.pi / 2

    def __post_init__(self) -> None:
        m = np.asarray(self.moduli, dtype=float)
        a = np.asarray(self.arguments, dtype=float)
        if m.ndim != 1 or a.ndim != 1 or m.size == 0 or a.size == 0:
            raise ValueError("grid axes must be non-empty 1-d arrays")
        if np.any(m <= 0) or np.any(np.diff(m) <= 0) or np.any(np.diff(a) <= 0):
            raise ValueError("grid axes must be positive/sorted")
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if np.max(np.abs(a)) > self.half_angle - self.margin + 1e-15:
            raise ValueError("arguments exceed half_angle - margin")
        object.__setattr__(self, "moduli", m)
        object.__setattr__(self, "arguments", a)

    @classmethod
    def make(
        cls,
        m_lo: float = 1e-6,
        m_hi: float = 1e6,
        n_moduli: int = 200,
        n_args: int = 181,
        margin: float = 1e-3,
        half_angle: float = math.pi / 2,
    ) -> "SectorGrid":
        moduli = np.geomspace(m_lo, m_hi, n_moduli)
        edge = half_angle - margin
        args = np.linspace(-edge, edge, n_args) if n_args > 1 else np.zeros(1)
        return cls(moduli, args, margin, half_angle)

    @classmethod
    def default(cls) -> "SectorGrid":
        return cls.make()

    def refine(self) -> "SectorGrid":
        """Twice as dense on both axes; contains every point of ``self``."""
        m = self.moduli
        a = self.arguments
        mm = np.empty(2 * m.size - 1)
        mm[0::2] = m
        mm[1::2] = np.sqrt(m[1:] * m[:-1])
        if a.size > 1:
            aa = np.empty(2 * a.size - 1)
            aa[0::2] = a
            aa[1::2] = 0.5 * (a[1:] + a[:-1])
        else:
            aa = a
        return SectorGrid(mm, aa, self.margin, self.half_angle)

    def points(self) -> np.ndarray:
        return self.moduli[:, None] * np.exp(1j * self.arguments[None, :])

    def describe(self) -> dict:
        return {
            "m_lo": float(self.moduli[0]),
            "m_hi": float(self.moduli[-1]),
            "n_moduli": int(self.moduli.size),
            "n_args": int(self.arguments.size),
            "margin": float(self.margin),
            "half_angle": float(self.half_angle),
        }


# ---------------------------------------------------------------------------
# kernel specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Scalar kernel a with Laplace transform a_hat.

    ``moments(x)`` returns (A0, A1); ``homogeneity`` is the degree d with
    a(h u) = h^d a(u) when the kernel is a pure power.  ``resolvent_poles(mu)``
    returns (poles, residues, mask) of 1/(lam (1 + mu a_hat(lam))) away from
    lam = 0, used to subtract exponentially small contributions exactly.
    """

    name: str
    params: Mapping[str, float]
    laplace: Callable[[np.ndarray], np.ndarray]
    laplace_d1: Callable[[np.ndarray], np.ndarray] | None = None
    laplace_d2: Callable[[np.ndarray], np.ndarray] | None = None
    time_domain: Callable[[np.ndarray], np.ndarray] | None = None
    singularity_exponent: float = 0.0
    moments: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    homogeneity: float | None = None
    resolvent_poles: Callable | None = None
    extras: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.singularity_exponent < 1:
            raise KernelParameterError("singularity exponent must be < 1")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    @property
    def key(self) -> tuple:
        return (self.name,) + tuple(sorted((k, float(v)) for k, v in self.params.items()))

    def __repr__(self) -> str:
        p = ", ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"KernelSpec({self.name}: {p})"

    def check_samples(self, lam: np.ndarray) -> bool:
        """a_hat nonzero and conjugation symmetric on the given samples."""
        v = self.laplace(lam)
        vc = self.laplace(np.conj(lam))
        ok_zero = bool(np.all(np.abs(v) > 0) and np.all(np.isfinite(v)))
        ok_conj = bool(np.all(np.abs(vc - np.conj(v)) <= 1e-13 * np.abs(v)))
        return ok_zero and ok_conj


class _MLOnAxis:
    """x -> E_{g,d}(-omega x^g) on x >= 0 through cached Chebyshev fits.

    The function is entire in z = -omega x^g, so a polynomial fit in z over
    [-omega X^g, 0] converges geometrically.  Fits are built for X = 2^e and
    fall back to direct evaluation if a fit does not converge.
    """

    def __init__(self, g: float, d: float, omega: float):
        self.p = MLParams(g, d)
        self.omega = omega
        self._fits: dict[int, Chebyshev | None] = {}

    def _fit(self, e: int) -> Chebyshev | None:
        if e in self._fits:
            return self._fits[e]
        zmax = self.omega * 2.0 ** (e * self.p.gamma_exp)

        def f(z):
            return np.real(mittag_leffler(self.p, z))

        fit = None
        for deg in (48, 96, 192, 384):
            c = Chebyshev.interpolate(f, deg, domain=[-zmax, 0.0])
            tail = np.max(np.abs(c.coef[-6:]))
            if tail <= 1e-15 * max(1.0, np.max(np.abs(c.coef))):
                fit = c
                break
        self._fits[e] = fit
        return fit

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z = -self.omega * x**self.p.gamma_exp
        if x.size == 0:
            return np.zeros(x.shape)
        xm = float(np.max(x))
        e = max(0, math.ceil(math.log2(xm))) if xm > 0 else 0
        fit = self._fit(e)
        if fit is None:
            return np.real(mittag_leffler(self.p, z))
        return fit(z)


def _power(lam, p):
    return np.exp(p * np.log(lam))


@functools.lru_cache(maxsize=None)
def _constant_one() -> KernelSpec:
    def lap(lam):
        return 1.0 / np.asarray(lam, dtype=complex)

    def d1(lam):
        lam = np.asarray(lam, dtype=complex)
        return -1.0 / lam**2

    def d2(lam):
        lam = np.asarray(lam, dtype=complex)
        return 2.0 / lam**3

    def td(t):
        return np.ones(np.shape(t))

    def moments(x):
        x = np.asarray(x, dtype=float)
        return x, 0.5 * x * x

    def poles(mu):
        mu = np.asarray(mu, dtype=complex)
        return -mu, np.ones(mu.shape, dtype=complex), mu != 0

    return KernelSpec(
        "constant_one", {}, lap, d1, d2, td, 0.0, moments, homogeneity=0.0, resolvent_poles=poles
    )


@functools.lru_cache(maxsize=None)
def _fractional_power(beta: float) -> KernelSpec:
    if not 0 < beta <= 1:
        raise KernelParameterError(f"fractional_power needs 0 < beta <= 1, got beta={beta}")
    if beta == 1:
        k = _constant_one()
        return KernelSpec(
            "fractional_power", {"beta": 1.0}, k.laplace, k.laplace_d1, k.laplace_d2, k.time_domain,
            0.0, k.moments, 0.0, k.resolvent_poles,
        )
    gb = float(gamma(beta))
    g1 = float(gamma(beta + 1.0))
    g2 = float(gamma(beta + 2.0))

    def lap(lam):
        return _power(np.asarray(lam, dtype=complex), -beta)

    def d1(lam):
        lam = np.asarray(lam, dtype=complex)
        return -beta * _power(lam, -beta - 1.0)

    def d2(lam):
        lam = np.asarray(lam, dtype=complex)
        return beta * (beta + 1.0) * _power(lam, -beta - 2.0)

    def td(t):
        return np.asarray(t, dtype=float) ** (beta - 1.0) / gb

    def moments(x):
        x = np.asarray(x, dtype=float)
        return x**beta / g1, beta * x ** (beta + 1.0) / g2

    def poles(mu):
        # lam^beta = -mu on the principal sheet needs |arg(-mu)| < beta*pi
        mu = np.asarray(mu, dtype=complex)
        arg = np.angle(-mu)
        mask = (mu != 0) & (np.abs(arg) < beta * math.pi * (1 - 1e-12))
        p = np.abs(mu) ** (1.0 / beta) * np.exp(1j * arg / beta)
        return p, np.full(mu.shape, 1.0 / beta, dtype=complex), mask

    return KernelSpec(
        "fractional_power",
        {"beta": beta},
        lap,
        d1,
        d2,
        td,
        1.0 - beta,
        moments,
        homogeneity=beta - 1.0,
        resolvent_poles=poles,
    )


@functools.lru_cache(maxsize=None)
def _distributed_order(alpha: float, beta: float, omega: float) -> KernelSpec:
    if not omega > 0:
        raise KernelParameterError(f"distributed_order needs omega > 0, got omega={omega}")
    if not (0 < 2 * alpha < beta <= 1):
        raise KernelParameterError(
            f"distributed_order needs 0 < 2*alpha < beta <= 1, got alpha={alpha}, beta={beta}"
        )
    # a_hat = 1/(omega lam^alpha + lam^beta) inverts to t^(beta-1) E_{beta-alpha, beta}(-omega t^(beta-alpha));
    # the printed form t^(beta-2alpha-1) E_{beta-alpha, beta-2alpha} transforms to lam^alpha/(omega + lam^(beta-alpha))
    g = beta - alpha
    d = beta
    e0 = _MLOnAxis(g, d, omega)
    e1 = _MLOnAxis(g, d + 1.0, omega)
    e2 = _MLOnAxis(g, d + 2.0, omega)

    def lap(lam):
        lam = np.asarray(lam, dtype=complex)
        return _power(lam, -alpha) / (omega + _power(lam, g))

    def logd1(lam):
        lg = _power(lam, g)
        return -alpha / lam - g * lg / (lam * (omega + lg))

    def d1(lam):
        lam = np.asarray(lam, dtype=complex)
        return lap(lam) * logd1(lam)

    def d2(lam):
        lam = np.asarray(lam, dtype=complex)
        lg = _power(lam, g)
        den = omega + lg
        l1 = logd1(lam)
        # derivative of g lam^(g-1)/(omega + lam^g)
        q = (g * (g - 1.0) * lg * den - g * g * lg * lg) / (lam * lam * den * den)
        l2 = alpha / lam**2 - q
        return lap(lam) * (l1 * l1 + l2)

    def td(t):
        t = np.asarray(t, dtype=float)
        return t ** (d - 1.0) * e0(t)

    def moments(x):
        x = np.asarray(x, dtype=float)
        m1 = e1(x)
        return x**d * m1, x ** (d + 1.0) * (m1 - e2(x))

    return KernelSpec(
        "distributed_order",
        {"alpha": alpha, "beta": beta, "omega": omega},
        lap,
        d1,
        d2,
        td,
        1.0 - beta,
        moments,
        extras={"ml_gamma": g, "ml_delta": d},
    )


def builtin_kernel(name: str, params: Mapping[str, float] | None = None) -> KernelSpec:
    """Construct one of the built-in kernels.

    constant_one: a = 1.  fractional_power: a = t^(beta-1)/Gamma(beta).
    distributed_order: a_hat = lam^-alpha / (omega + lam^(beta-alpha)).
    """
    params = dict(params or {})
    required = {
        "constant_one": (),
        "fractional_power": ("beta",),
        "distributed_order": ("alpha", "beta", "omega"),
    }
    if name not in required:
        raise KernelParameterError(f"unknown kernel {name!r}; known kernels: {', '.join(BUILTIN_KERNELS)}")
    missing = [p for p in required[name] if p not in params]
    if missing:
        raise KernelParameterError(f"kernel {name!r} is missing parameters: {', '.join(missing)}")
    extra = set(params) - set(required[name])
    if extra:
        raise KernelParameterError(f"kernel {name!r} got unknown parameters: {', '.join(sorted(extra))}")
    vals = {k: float(v) for k, v in params.items()}
    if name == "constant_one":
        return _constant_one()
    if name == "fractional_power":
        return _fractional_power(vals["beta"])
    return _distributed_order(vals["alpha"], vals["beta"], vals["omega"])


# ---------------------------------------------------------------------------
# derivatives and certificates
# ---------------------------------------------------------------------------


def _cauchy_derivative(f, lam: np.ndarray, order: int, n: int = 32) -> np.ndarray:
    # circle radius: half the distance to the imaginary axis (and to 0)
    lam = np.asarray(lam, dtype=complex)
    r = 0.5 * np.minimum(np.abs(lam), lam.real)
    th = 2 * np.pi * np.arange(n) / n
    z = lam[..., None] + r[..., None] * np.exp(1j * th)
    vals = f(z)
    coef = np.mean(vals * np.exp(-1j * order * th), axis=-1)
    return math.factorial(order) * coef / r**order


def laplace_derivative(k: KernelSpec, lam, order: int) -> tuple[np.ndarray, bool]:
    """n-th derivative of a_hat; second value is True for closed forms."""
    lam = np.asarray(lam, dtype=complex)
    closed = {1: k.laplace_d1, 2: k.laplace_d2}.get(order)
    if order not in (1, 2):
        raise MissingDerivativeError("only derivatives of order 1 and 2 are supported")
    if closed is not None:
        return closed(lam), True
    return _cauchy_derivative(k.laplace, lam, order), False


def regularity_constants(k: KernelSpec, order: int, g: SectorGrid | None = None) -> dict[int, float]:
    """Per-order maxima of |lam^n a_hat^(n)(lam)| / |a_hat(lam)| on the grid."""
    if order not in (1, 2):
        raise MissingDerivativeError(f"regularity order must be 1 or 2, got {order}")
    g = g or SectorGrid.default()
    lam = g.points()
    ah = k.laplace(lam)
    out = {}
    for n in range(1, order + 1):
        dn, _ = laplace_derivative(k, lam, n)
        out[n] = float(np.max(np.abs(lam**n * dn) / np.abs(ah)))
    return out


def regularity_constant(k: KernelSpec, order: int = 1, g: SectorGrid | None = None) -> float:
    return max(regularity_constants(k, order, g).values())


class SectorAngle(float):
    """Grid supremum of |arg a_hat| with its grid margin.

    ``on_boundary`` is True when the supremum sits on the outermost grid
    argument, i.e. the true angle is approached rather than attained.
    """

    margin: float
    on_boundary: bool

    def __new__(cls, value: float, margin: float, on_boundary: bool):
        obj = super().__new__(cls, value)
        obj.margin = margin
        obj.on_boundary = on_boundary
        return obj


def sectorial_angle(k: KernelSpec, g: SectorGrid | None = None) -> SectorAngle:
    g = g or SectorGrid.default()
    ang = np.abs(np.angle(k.laplace(g.points())))
    i, j = np.unravel_index(int(np.argmax(ang)), ang.shape)
    boundary = j in (0, g.arguments.size - 1)
    return SectorAngle(float(ang[i, j]), g.margin, bool(boundary))


def _growth_inf(k: KernelSpec, rho0: float, g: SectorGrid) -> float:
    lam = g.points()
    mod = np.abs(lam)
    ah = np.abs(k.laplace(lam))
    big = mod >= 1
    vals = np.where(big, ah * mod**rho0, ah * mod ** (-rho0))
    return float(np.min(vals))


def growth_lower_bound(k: KernelSpec, theta: float, g: SectorGrid | None = None) -> tuple[float, bool]:
    """Grid estimate of c in |a_hat| >= c|lam|^-rho0 (|lam| >= 1), >= c|lam|^rho0 (|lam| <= 1).

    rho0 = 2 theta / pi.  Passes when c > 0 and changes by at most 5% under
    one grid refinement.
    """
    if not 0 < theta <= math.pi:
        raise ValueError("theta must lie in (0, pi]")
    g = g or SectorGrid.default()
    rho0 = 2.0 * theta / math.pi
    c = _growth_inf(k, rho0, g)
    c_ref = _growth_inf(k, rho0, g.refine())
    ok = c > 0 and abs(c_ref - c) <= 0.05 * c
    return c, bool(ok)


def sector_inequality_constant(theta: float, g: SectorGrid | None = None) -> float:
    """sup of (1 + |lam|) / |1 + lam| over a grid of the sector |arg lam| < pi - theta."""
    if not 0 < theta < math.pi:
        raise ValueError("theta must lie in (0, pi)")
    half = math.pi - theta
    if g is None:
        g = SectorGrid.make(1e-6, 1e6, 241, 181, margin=1e-3, half_angle=half)
    elif g.half_angle > half + 1e-15:
        raise ValueError("grid extends beyond the sector of half angle pi - theta")
    lam = g.points()
    return float(np.max((1.0 + np.abs(lam)) / np.abs(1.0 + lam)))


def parabolicity_check(
    k: KernelSpec,
    eigenvalues,
    g: SectorGrid | None = None,
    omega: float | None = None,
    tol: float = 1e-12,
) -> bool:
    """Sufficient angle criterion plus a sampled check that 1/a_hat avoids the spectrum."""
    g = g or SectorGrid.default()
    ev = np.asarray(eigenvalues, dtype=complex).ravel()
    if omega is None:
        omega = float(np.max(np.abs(np.angle(-ev)))) if ev.size else 0.0
    theta = sectorial_angle(k, g)
    if not theta + omega < math.pi:
        return False
    inv = (1.0 / k.laplace(g.points())).ravel()
    scale = np.abs(inv)
    for chunk in np.array_split(ev, max(1, ev.size // 64)):
        dist = np.abs(inv[:, None] - chunk[None, :])
        if np.any(dist <= tol * np.maximum(scale[:, None], 1.0)):
            return False
    return True


class KernelCertificate(NamedTuple):
    regularity_order: int
    regularity_constant: float
    regularity_by_order: dict
    sector_angle: float
    angle_on_boundary: bool
    growth_constant: float
    grid: SectorGrid
    pass_flags: dict
    derivative_source: str

    def to_dict(self) -> dict:
        return {
            "regularity_order": self.regularity_order,
            "regularity_constant": self.regularity_constant,
            "regularity_by_order": {str(k): v for k, v in self.regularity_by_order.items()},
            "sector_angle": self.sector_angle,
            "sector_angle_over_pi": self.sector_angle / math.pi,
            "angle_on_boundary": self.angle_on_boundary,
            "growth_constant": self.growth_constant,
            "grid": self.grid.describe(),
            "pass_flags": dict(self.pass_flags),
            "derivative_source": self.derivative_source,
            "note": "grid-based evidence, not a proof",
        }


def certify_kernel(k: KernelSpec, g: SectorGrid | None = None, order: int = 1) -> KernelCertificate:
    """Regularity, angle and growth certificates on a grid and its refinement."""
    g = g or SectorGrid.default()
    reg = regularity_constants(k, order, g)
    reg_ref = regularity_constants(k, order, g.refine())
    kreg = max(reg.values())
    kreg_ref = max(reg_ref.values())
    theta = sectorial_angle(k, g)
    c, growth_ok = growth_lower_bound(k, float(theta), g)
    closed = k.laplace_d1 is not None and (order < 2 or k.laplace_d2 is not None)
    flags = {
        "regularity_finite": bool(np.isfinite(kreg)),
        "regularity_stable": bool(abs(kreg_ref - kreg) <= 0.01 * kreg),
        "angle_below_half_pi": bool(theta < math.pi / 2 and not (theta.on_boundary and theta + 2 * g.margin >= math.pi / 2)),
        "growth_bound": growth_ok,
        "samples_valid": k.check_samples(g.points()),
    }
    return KernelCertificate(
        order, kreg, reg, float(theta), theta.on_boundary, c, g, flags,
        "closed_form" if closed else "cauchy_numerical",
    )
