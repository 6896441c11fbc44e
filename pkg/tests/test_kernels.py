import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special

from volterra_obs.kernels import (
    KernelParameterError,
    KernelSpec,
    SectorGrid,
    builtin_kernel,
    certify_kernel,
    growth_lower_bound,
    laplace_derivative,
    parabolicity_check,
    regularity_constant,
    sector_inequality_constant,
    sectorial_angle,
)
from volterra_obs.laplace import forward_laplace

DIST = {"alpha": 0.2, "beta": 0.9, "omega": 1.0}


def test_laplace_anchor_values():
    assert builtin_kernel("constant_one").laplace(np.array([3.0 + 0j]))[0] == pytest.approx(1 / 3)
    assert builtin_kernel("fractional_power", {"beta": 0.5}).laplace(np.array([4.0 + 0j]))[0] == pytest.approx(0.5)
    assert builtin_kernel("distributed_order", DIST).laplace(np.array([1.0 + 0j]))[0] == pytest.approx(0.5)


@pytest.mark.parametrize("lam", [1.0, 2.0, 1 + 1j])
@pytest.mark.parametrize("name,params", [("fractional_power", {"beta": 0.5}), ("distributed_order", DIST)])
def test_time_domain_matches_transform(name, params, lam):
    k = builtin_kernel(name, params)
    val = forward_laplace(k.time_domain, lam, singularity=k.singularity_exponent)
    assert abs(val - k.laplace(np.array([complex(lam)]))[0]) < 1e-8


def test_distributed_singularity_exponent():
    # a(t) ~ t^(beta-1)/Gamma(beta) at the origin
    k = builtin_kernel("distributed_order", DIST)
    assert k.singularity_exponent == pytest.approx(0.1)
    t = 1e-10
    assert k.time_domain(np.array([t]))[0] * special.gamma(0.9) / t ** (-0.1) == pytest.approx(1.0, rel=1e-6)


# int_0^x u^j a(u) du by termwise integration of the series (mpmath, 40 digits)
MOMENTS_FROZEN = [
    (0.01, 0.01604684429052664, 7.540642888157444e-05),
    (0.3, 0.26946215985651367, 0.03521358962526224),
    (2.0, 0.8533363096430111, 0.6114702402757533),
]


@pytest.mark.parametrize("x,m0,m1", MOMENTS_FROZEN)
def test_moments_frozen(x, m0, m1):
    a0, a1 = builtin_kernel("distributed_order", DIST).moments(np.array([x]))
    assert a0[0] == pytest.approx(m0, rel=1e-12)
    assert a1[0] == pytest.approx(m1, rel=1e-12)


@given(st.floats(0.05, 0.95), st.floats(1e-3, 5.0))
def test_power_moments_closed_form(beta, x):
    a0, a1 = builtin_kernel("fractional_power", {"beta": beta}).moments(np.array([x]))
    assert a0[0] == pytest.approx(x**beta / special.gamma(beta + 1), rel=1e-12)
    assert a1[0] == pytest.approx(x ** (beta + 1) / (special.gamma(beta) * (beta + 1)), rel=1e-12)


def test_moments_agree_with_quadrature_away_from_origin():
    k = builtin_kernel("distributed_order", DIST)
    a0, _ = k.moments(np.array([0.5, 2.0]))
    q = integrate.quad(lambda u: k.time_domain(np.array([u]))[0], 0.5, 2.0)[0]
    assert a0[1] - a0[0] == pytest.approx(q, rel=1e-9)


@pytest.mark.parametrize(
    "name,params",
    [
        ("nope", {}),
        ("fractional_power", {}),
        ("fractional_power", {"beta": 1.5}),
        ("constant_one", {"beta": 0.5}),
        ("distributed_order", {"alpha": 0.5, "beta": 0.9, "omega": 1.0}),
        ("distributed_order", {"alpha": 0.2, "beta": 0.9, "omega": -1.0}),
    ],
)
def test_parameter_errors(name, params):
    with pytest.raises(KernelParameterError):
        builtin_kernel(name, params)


def test_regularity_constants():
    assert regularity_constant(builtin_kernel("constant_one")) == pytest.approx(1.0, rel=1e-12)
    assert regularity_constant(builtin_kernel("fractional_power", {"beta": 0.5})) == pytest.approx(0.5, rel=1e-12)
    k = builtin_kernel("distributed_order", DIST)
    g = SectorGrid.make(n_moduli=120, n_args=91)
    c1 = regularity_constant(k, 1, g)
    c2 = regularity_constant(k, 1, g.refine().refine())
    assert np.isfinite(c1) and abs(c2 - c1) <= 0.01 * c1


def test_cauchy_derivative_matches_closed_form():
    k = builtin_kernel("distributed_order", DIST)
    bare = KernelSpec("bare", {}, k.laplace)
    lam = SectorGrid.make(1e-3, 1e3, 13, 9).points()
    for order in (1, 2):
        exact, closed = laplace_derivative(k, lam, order)
        approx, closed2 = laplace_derivative(bare, lam, order)
        assert closed and not closed2
        assert np.max(np.abs(approx - exact) / np.abs(exact)) < 1e-8


def test_sectorial_angles():
    th = sectorial_angle(builtin_kernel("constant_one"))
    assert th == pytest.approx(math.pi / 2 - th.margin, abs=1e-12) and th.on_boundary
    assert sectorial_angle(builtin_kernel("fractional_power", {"beta": 0.5})) < math.pi / 4
    assert sectorial_angle(builtin_kernel("fractional_power", {"beta": 0.5})) > math.pi / 4 - 1e-3
    assert sectorial_angle(builtin_kernel("distributed_order", DIST)) <= 0.45 * math.pi


def test_sectorial_angle_monotone_under_refinement():
    k = builtin_kernel("distributed_order", DIST)
    g = SectorGrid.make(n_moduli=60, n_args=31)
    assert sectorial_angle(k, g.refine()) >= sectorial_angle(k, g)


def test_growth_lower_bounds():
    c, ok = growth_lower_bound(builtin_kernel("constant_one"), math.pi / 2)
    assert ok and c == pytest.approx(1.0, rel=1e-12)
    c, ok = growth_lower_bound(builtin_kernel("fractional_power", {"beta": 0.5}), math.pi / 4)
    assert ok and c == pytest.approx(1.0, rel=1e-12)
    k = builtin_kernel("distributed_order", DIST)
    c, ok = growth_lower_bound(k, float(sectorial_angle(k)))
    assert ok and c > 0


def test_sector_inequality():
    assert sector_inequality_constant(math.pi / 3) <= 2.0
    g = SectorGrid(np.geomspace(1e-3, 1e3, 50), np.array([0.0]), 1e-3, math.pi / 2)
    assert sector_inequality_constant(math.pi / 2, g) == pytest.approx(1.0)


@given(st.floats(0.05, 3.0))
def test_sector_inequality_below_proof_bound(theta):
    g = SectorGrid.make(1e-4, 1e4, 61, 41, half_angle=math.pi - theta)
    assert sector_inequality_constant(theta, g) <= 1 / math.sin(theta / 2) * (1 + 1e-12)


def test_parabolicity():
    n = -np.arange(1, 33, dtype=float)
    assert parabolicity_check(builtin_kernel("constant_one"), n)
    assert parabolicity_check(builtin_kernel("fractional_power", {"beta": 0.9}), n, omega=math.pi / 2 - 0.1)
    wide = KernelSpec("wide", {}, lambda lam: lam**-1.2)
    assert not parabolicity_check(wide, n, omega=math.pi / 2)


def test_certificate_for_model_kernel():
    cert = certify_kernel(builtin_kernel("distributed_order", DIST))
    assert all(cert.pass_flags.values())
    assert cert.derivative_source == "closed_form"
    d = cert.to_dict()
    assert d["sector_angle_over_pi"] < 0.5


def test_grid_refine_contains_original():
    g = SectorGrid.make(n_moduli=11, n_args=7)
    r = g.refine()
    assert set(np.round(g.moduli, 14)).issubset(set(np.round(r.moduli, 14)))
    assert set(np.round(g.arguments, 14)).issubset(set(np.round(r.arguments, 14)))


@given(st.floats(0.05, 1.0))
def test_power_kernel_regularity_equals_beta(beta):
    k = builtin_kernel("fractional_power", {"beta": beta})
    assert regularity_constant(k, 1, SectorGrid.make(n_moduli=20, n_args=11)) == pytest.approx(beta, rel=1e-10)


@given(st.floats(0.01, 0.3), st.floats(0.1, 0.4), st.floats(0.1, 5.0), st.floats(1e-3, 1e3), st.floats(-1.5, 1.5))
def test_distributed_kernel_conjugate_symmetry_and_angle(alpha, gap, omega, r, phi):
    beta = min(1.0, 2 * alpha + gap)
    k = builtin_kernel("distributed_order", {"alpha": alpha, "beta": beta, "omega": omega})
    lam = np.array([r * np.exp(1j * phi)])
    v = k.laplace(lam)[0]
    assert abs(k.laplace(np.conj(lam))[0] - np.conj(v)) <= 1e-13 * abs(v)
    # right half-plane maps into the sector of angle pi/2
    assert abs(np.angle(v)) < math.pi / 2
