import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from volterra_obs.fracdiff import FracDiffConfig, build_system
from volterra_obs.kernels import builtin_kernel
from volterra_obs.systems import (
    DiagonalSystem,
    ResolventSingularityError,
    StateVector,
    SystemError,
    constructed_system,
    graded_nodes,
    resolvent_CR_norm,
    resolvent_residual,
    s_modes,
    semigroup_apply,
    solution_family_apply,
    transfer_H_coeffs,
)

ONE = builtin_kernel("constant_one")
HALF = builtin_kernel("fractional_power", {"beta": 0.5})
DIST = builtin_kernel("distributed_order", {"alpha": 0.2, "beta": 0.9, "omega": 1.0})
ALL_KERNELS = [ONE, HALF, DIST]


def single_mode(lam=-1.0, c=1.0):
    return DiagonalSystem([lam], [c], initial_state=[1.0])


def test_invariants_rejected():
    with pytest.raises(SystemError):
        DiagonalSystem([0.0, -1.0], [1.0, 1.0])
    with pytest.raises(SystemError):
        DiagonalSystem([-1.0], [1.0, 2.0])
    with pytest.raises(SystemError):
        DiagonalSystem([-1 + 5j], [1.0], sector_angle=0.5)
    with pytest.raises(SystemError):
        DiagonalSystem([-1.0], [1.0], initial_state=[1.0, 0.0])


def test_describe_reports_margin_and_obs_bound():
    sys = constructed_system(8, c_power=1.0)
    d = sys.describe()
    assert d["stability_margin"] == 1.0
    assert d["n_modes"] == 8
    # |c_n| / (1 + |lambda_n|) = n / (1 + n) is largest at n = 8
    assert d["obs_bound"] == pytest.approx(8 / 9)


def test_semigroup_examples():
    sys = single_mode()
    assert semigroup_apply(sys, 0.0).coeffs[0] == 1.0
    assert semigroup_apply(sys, 1.0).coeffs[0] == pytest.approx(math.exp(-1.0), rel=1e-15)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_semigroup_norm_decay(t):
    sys = build_system(FracDiffConfig(n_modes=16))
    x = StateVector(np.linspace(1.0, 2.0, 16))
    assert semigroup_apply(sys, t, x).norm <= math.exp(-sys.stability_margin * t) * x.norm * (1 + 1e-14)


def test_solution_family_half_order_example():
    out = solution_family_apply(single_mode(), HALF, 1.0)
    assert out.coeffs[0].real == pytest.approx(math.e * special.erfc(1.0), rel=1e-8)
    assert out.coeffs[0].real == pytest.approx(0.427584, abs=1e-6)


def test_solution_family_identity_at_zero():
    sys = constructed_system(4)
    x = StateVector([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(solution_family_apply(sys, DIST, 0.0, x).coeffs, x.coeffs)


def test_semigroup_degeneracy_random_states():
    sys = build_system(FracDiffConfig(n_modes=16))
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.normal(size=16) + 1j * rng.normal(size=16)
        t = float(rng.uniform(0.05, 2.0))
        a = solution_family_apply(sys, ONE, t, x).coeffs
        b = semigroup_apply(sys, t, x).coeffs
        assert np.max(np.abs(a - b)) <= 1e-8 * np.linalg.norm(x)


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: k.name)
def test_mode_decoupling(k):
    sys = build_system(FracDiffConfig(n_modes=8))
    for j in (0, 3, 7):
        e = np.zeros(8)
        e[j] = 1.0
        out = solution_family_apply(sys, k, 0.5, e).coeffs
        assert np.count_nonzero(out) == 1
        assert out[j] == s_modes(k, sys.mu, np.array([0.5]))[0, j]


def test_transfer_examples():
    assert transfer_H_coeffs(single_mode(), ONE, 1.0)[0] == pytest.approx(0.5)
    sys = constructed_system(5, c_power=0.5)
    lam = 0.7 + 2j
    assert np.allclose(transfer_H_coeffs(sys, ONE, lam), sys.obs_coeffs / (lam - sys.eigenvalues), rtol=1e-14)
    # model kernel: a_hat(1) = 1 / (1 + omega)
    pi2 = math.pi**2
    got = transfer_H_coeffs(single_mode(-pi2), DIST, 1.0)[0]
    assert got == pytest.approx(1.0 / (1.0 + pi2 / 2.0), rel=1e-13)


class _FlatKernel:
    # a_hat = -1 makes 1 - a_hat(lam) lambda_n vanish for lambda_n = -1
    def laplace(self, lam):
        return -np.ones_like(lam)


def test_transfer_rejects_left_half_plane_and_singularity():
    with pytest.raises(ValueError):
        transfer_H_coeffs(single_mode(), ONE, -1.0)
    with pytest.raises(ResolventSingularityError):
        transfer_H_coeffs(single_mode(-1.0), _FlatKernel(), np.array([1.0]))


def test_laplace_consistency():
    # forward transform of s(., mu_n) against 1 / (lam (1 - a_hat(lam) lambda_n))
    sys = build_system(FracDiffConfig(n_modes=3))
    t, w = graded_nodes(0.0, 60.0, decades=10.0, per_decade=4)
    S = s_modes(DIST, sys.mu, t)
    for lam in (0.5, 1.0, 2.0, 1.0 + 1.0j, 3.0 - 2.0j):
        fwd = (w * np.exp(-lam * t)) @ S
        expect = transfer_H_coeffs(sys, DIST, lam) / sys.obs_coeffs
        assert np.max(np.abs(fwd - expect) / np.abs(expect)) <= 1e-5


def test_resolvent_residual_constant_kernel():
    sys = constructed_system(10)
    for t in (0.3, 1.0, 2.5):
        assert resolvent_residual(sys, ONE, t) <= 1e-7


@pytest.mark.parametrize("k", ALL_KERNELS, ids=lambda k: k.name)
def test_resolvent_residual_fracdiff(k):
    sys = build_system(FracDiffConfig(n_modes=32))
    for t in (0.25, 0.5, 1.0):
        assert resolvent_residual(sys, k, t) <= 1e-5


def test_resolvent_residual_rejects_bad_t():
    with pytest.raises(ValueError):
        resolvent_residual(constructed_system(2), ONE, 0.0)


def test_cr_norm_examples():
    assert resolvent_CR_norm(single_mode(), 1.0) == pytest.approx(0.5)
    direct = math.sqrt(sum(1.0 / (1 + n) ** 2 for n in range(1, 65)))
    assert resolvent_CR_norm(constructed_system(64), 1.0) == pytest.approx(direct, rel=1e-14)
    assert direct == pytest.approx(0.7935, abs=5e-4)
    with pytest.raises(ValueError):
        resolvent_CR_norm(single_mode(), -1.0)


def test_cr_norm_decays_like_max_c_over_lambda():
    sys = constructed_system(6, c_power=0.5)
    big = 1e8
    cmax = float(np.max(np.abs(sys.obs_coeffs)))
    assert resolvent_CR_norm(sys, big) <= math.sqrt(6) * cmax / big
    vals = [resolvent_CR_norm(sys, x) for x in (1.0, 10.0, 100.0, 1000.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@settings(max_examples=25)
@given(st.integers(1, 12), st.floats(0.05, 5.0), st.floats(-20.0, 20.0))
def test_cr_norm_matches_direct_sum(n, re, im):
    sys = constructed_system(n, c_power=0.5)
    lam = complex(re, im)
    direct = math.sqrt(sum(k / abs(lam + k) ** 2 for k in range(1, n + 1)))
    assert resolvent_CR_norm(sys, lam) == pytest.approx(direct, rel=1e-12)


@settings(max_examples=25)
@given(st.lists(st.floats(-3.0, 3.0), min_size=4, max_size=4), st.floats(0.0, 3.0))
def test_semigroup_is_contractive_on_random_states(xs, t):
    sys = constructed_system(4)
    x = StateVector(xs)
    assert semigroup_apply(sys, t, x).norm <= math.exp(-t) * x.norm + 1e-15
