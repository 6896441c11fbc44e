import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from volterra_obs.laplace import AccuracyError, ContourSpec, NonDecayError, bromwich_invert, forward_laplace


def test_invert_exponential():
    t = np.array([0.1, 1.0, 10.0])
    for mu in (1.0, 2.0, 1 + 5j):
        f = bromwich_invert(lambda lam: 1.0 / (lam + mu), t)
        # plain line inversion controls the error relative to max(1, |f|)
        assert np.max(np.abs(f - np.exp(-mu * t))) < 1e-8


def test_invert_half_power_and_erfc():
    t = np.geomspace(0.01, 100, 9)
    f = bromwich_invert(lambda lam: lam**-0.5, t)
    assert np.allclose(f, 1 / np.sqrt(np.pi * t), rtol=1e-10)
    # 1/(sqrt(lam)(sqrt(lam)+1)) <-> exp(t) erfc(sqrt(t))
    g = bromwich_invert(lambda lam: 1 / (np.sqrt(lam) * (np.sqrt(lam) + 1)), t)
    assert np.allclose(g, special.erfcx(np.sqrt(t)), rtol=1e-9)


def test_invert_oscillatory():
    t = np.linspace(0.5, 20, 8)
    f = bromwich_invert(lambda lam: 1 / (lam**2 + 1), t)
    assert np.max(np.abs(f - np.sin(t))) < 1e-8


def test_methods_agree():
    t = np.array([0.5, 2.0])
    F = lambda lam: 1 / (lam * (1 + lam**-0.5))  # noqa: E731
    a = bromwich_invert(F, t)
    b = bromwich_invert(F, t, method="talbot")
    assert np.allclose(a, b, rtol=1e-9)


def test_trapezoid_method():
    t = np.array([0.5, 2.0])
    F = lambda lam: 1 / (lam + 1) ** 2  # noqa: E731
    c = bromwich_invert(F, t, method="trapezoid", contour=ContourSpec(abscissa=1.0, half_height=200, nodes=64), tol=1e-6)
    assert np.allclose(c, t * np.exp(-t), atol=1e-6)


def test_trapezoid_reports_slow_decay():
    with pytest.raises(NonDecayError):
        bromwich_invert(lambda lam: 1 / (lam * (1 + lam**-0.5)), 1.0, method="trapezoid",
                        contour=ContourSpec(abscissa=1.0, half_height=200, nodes=64))


def test_trailing_axes_are_carried():
    mu = np.array([1.0, 3.0])
    t = np.array([0.5, 1.0])
    f = bromwich_invert(lambda lam: 1.0 / (lam[..., None] + mu), t)
    assert f.shape == (2, 2)
    assert np.allclose(f, np.exp(-np.outer(t, mu)), rtol=1e-9)


def test_scalar_in_scalar_out():
    assert np.ndim(bromwich_invert(lambda lam: 1 / (lam + 1), 1.0)) == 0


def test_invalid_inputs():
    with pytest.raises(ValueError):
        bromwich_invert(lambda lam: 1 / lam, [0.0, 1.0])
    with pytest.raises(ValueError):
        ContourSpec(abscissa=-1.0)
    with pytest.raises(ValueError):
        forward_laplace(lambda t: t, 0.0)


def test_forward_closed_forms():
    assert forward_laplace(lambda t: np.exp(-t), 2.0) == pytest.approx(1 / 3, rel=1e-12)
    lam = 1.5 + 2j
    val = forward_laplace(lambda t: t**-0.5, lam, singularity=0.5)
    assert abs(val - math.sqrt(math.pi) / np.sqrt(lam)) < 1e-10


def test_forward_sampled():
    t = np.linspace(0, 60, 6001)
    v = forward_laplace((t, np.exp(-t)), 1.0, tol=1e-4)
    assert v == pytest.approx(0.5, rel=1e-6)
    with pytest.raises(AccuracyError):
        forward_laplace((t[::600], np.exp(-t[::600])), 1.0, tol=1e-12)


@given(st.floats(0.1, 20.0), st.floats(-20.0, 20.0), st.floats(0.05, 5.0))
def test_exponential_roundtrip(a, b, t):
    mu = complex(a, b)
    f = bromwich_invert(lambda lam: 1.0 / (lam + mu), t)
    assert abs(f - np.exp(-mu * t)) <= 1e-8


@given(st.floats(0.1, 0.95), st.floats(0.05, 10.0))
def test_power_roundtrip(beta, t):
    # lam^-beta <-> t^(beta-1)/Gamma(beta)
    f = bromwich_invert(lambda lam: lam**-beta, t)
    assert f == pytest.approx(t ** (beta - 1) / special.gamma(beta), rel=1e-8)


@given(st.floats(0.2, 5.0), st.floats(-5.0, 5.0))
def test_forward_linearity(a, b):
    lam = complex(a, b)
    f = lambda t: np.exp(-t) * np.cos(t)  # noqa: E731
    g = lambda t: t * np.exp(-2 * t)  # noqa: E731
    lhs = forward_laplace(lambda t: 2 * f(t) - 3 * g(t), lam)
    rhs = 2 * forward_laplace(f, lam) - 3 * forward_laplace(g, lam)
    assert abs(lhs - rhs) < 1e-10 * max(1, abs(lhs))
