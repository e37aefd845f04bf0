import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bosonstar.errors import ParameterError
from bosonstar.inequalities import (
    HERBST_CONSTANT,
    CubeGrid,
    GaussianProfile,
    LowRankState,
    RadialQuadrature,
    RadialState,
    cell_average_factor,
    herbst_check,
    mixed_power_check,
    mixed_ratio,
)

BOUND = HERBST_CONSTANT * 1.01


def hydrogen():
    return RadialState(lambda r: np.exp(-np.asarray(r)))


def gaussian(sigma, quad=None):
    return RadialState(lambda r: np.exp(-np.asarray(r) ** 2 / (2 * sigma**2)), quad)


# one-particle radial checks


def test_hydrogen_inverse_radius_is_one():
    assert hydrogen().inverse_r() == pytest.approx(1.0, abs=1e-8)


def test_hydrogen_kinetic_closed_forms():
    s = hydrogen()
    # momentum density 8 / (pi^2 (1 + p^2)^4)
    assert s.kinetic() == pytest.approx(64 / (15 * np.pi), abs=1e-8)
    assert s.kinetic(massless=True) == pytest.approx(8 / (3 * np.pi), abs=1e-5)
    assert s.ratio() == pytest.approx(15 * np.pi / 64, rel=1e-7)
    assert s.ratio() < HERBST_CONSTANT


# the momentum sum samples k on a pi/R lattice, so wide states need a larger box
@pytest.mark.parametrize("sigma,quad", [(0.5, None), (1.0, None), (5.0, RadialQuadrature(R=160.0, uniform=32768))])
def test_gaussian_closed_forms(sigma, quad):
    s = gaussian(sigma, quad)
    assert s.inverse_r() == pytest.approx(2 / (np.sqrt(np.pi) * sigma), rel=1e-7)
    assert s.kinetic(massless=True) == pytest.approx(2 / (np.sqrt(np.pi) * sigma), rel=1e-5)


def test_wide_gaussian_ratio_is_small():
    s = gaussian(5.0)
    # <(1 + p^2)^(1/2)> ~ 1 + <p^2>/2 with <p^2> = 3 / (2 sigma^2)
    assert s.kinetic() == pytest.approx(1 + 3 / (4 * 25), abs=2e-3)
    assert s.ratio() < 0.2 * HERBST_CONSTANT


def test_norm_is_one_after_construction():
    assert hydrogen().norm2() == pytest.approx(1.0, abs=1e-12)


def test_zero_profile_rejected():
    with pytest.raises(ParameterError):
        RadialState(lambda r: np.zeros_like(r))


@given(st.integers(0, 2**31), st.sampled_from([0.5, 0.8, 1.25, 2.0]))
@settings(max_examples=20)
def test_homogeneous_ratio_is_scale_invariant(seed, mu):
    s = RadialState(GaussianProfile.random(np.random.default_rng(seed)))
    d = s.dilated(mu)
    assert d.inverse_r() == pytest.approx(mu * s.inverse_r(), rel=1e-6)
    assert d.ratio(massless=True) == pytest.approx(s.ratio(massless=True), rel=0.01)


@given(st.integers(0, 2**31))
@settings(max_examples=30)
def test_random_profiles_obey_massless_bound(seed):
    # the massless version is the sharp statement; the massive ratio is smaller still
    s = RadialState(GaussianProfile.random(np.random.default_rng(seed)))
    assert s.ratio() <= s.ratio(massless=True) <= BOUND


def test_refinement_leaves_values_stable():
    s = RadialState(GaussianProfile.random(np.random.default_rng(3)))
    q = s.quad.refined()
    assert q.nodes > s.quad.nodes
    assert s.inverse_r(q) == pytest.approx(s.inverse_r(), abs=1e-6)
    assert s.kinetic(q) == pytest.approx(s.kinetic(), abs=1e-6)


def test_herbst_sweep():
    rep = herbst_check(200, seed=5)
    assert rep.ok
    assert rep.violations == 0
    assert len(rep.ratios) + rep.rejected == 200
    assert rep.max_ratio <= BOUND
    assert rep.summary()["max_ratio"] == rep.max_ratio


def test_herbst_sweep_is_seed_deterministic():
    a, b = herbst_check(20, seed=9), herbst_check(20, seed=9)
    np.testing.assert_array_equal(a.ratios, b.ratios)
    assert not np.array_equal(a.ratios, herbst_check(20, seed=10).ratios)


# two-particle mixed powers


def test_cell_average_factor_zero_power():
    assert cell_average_factor(0.0) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("a", [1.0, 2.0])
def test_cell_average_factor_against_monte_carlo(a):
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.5, 0.5, (2_000_000, 3))
    vals = np.linalg.norm(x, axis=1) ** (-a)
    mc = vals.mean()
    err = vals.std() / np.sqrt(len(vals))
    assert abs(cell_average_factor(a) - mc) <= 5 * err + 1e-3 * mc


def test_cell_average_factor_domain():
    with pytest.raises(ParameterError):
        cell_average_factor(3.0)


def test_mixed_ratio_numerator_against_pair_sum():
    g = CubeGrid(6, 6.0)
    state = LowRankState.random(np.random.default_rng(2), rank=2)
    a = 1.0
    r = g.radius().ravel()
    x = (np.arange(g.n) - g.n // 2) * g.h
    pts = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    K = np.where(dist > 0, dist, 1.0) ** (-a)
    np.fill_diagonal(K, cell_average_factor(a) * g.h ** (-a))
    Phi = sum(c * np.outer(f(r), gg(r)) for c, f, gg in zip(state.coef, state.left, state.right))
    num = np.sum(np.abs(Phi) ** 2 * K) * g.h**6
    # denominator: tensor-product Fourier multiplier applied to the full two-particle array
    ksq = g.ksq()
    S = ((1 + ksq) ** 0.25).ravel()
    F = np.fft.fftn(Phi.reshape((g.n,) * 6), axes=range(6)).reshape(g.n**3, g.n**3)
    den = np.sum(S[:, None] * S[None, :] * np.abs(F) ** 2).real / g.n**6 * g.h**6
    assert mixed_ratio(state, a, 1.0, 1.0, g) == pytest.approx(num / den, rel=1e-10)


def test_identical_product_states_obey_herbst_constant():
    rep = mixed_power_check(1.0, 1.0, 1.0, 10, seed=0, identical=True)
    assert rep.constant <= BOUND


def test_mixed_constant_stable_under_refinement():
    rep = mixed_power_check(2.0, 2.0, 2.0, 8, seed=1)
    assert np.isfinite(rep.constant)
    assert rep.refined_constant == pytest.approx(rep.constant, rel=0.05)


def test_mixed_constant_grows_towards_three():
    consts = [mixed_power_check(a, a, a, 6, seed=4, refine_n=None).constant for a in (2.0, 2.5, 2.8)]
    assert consts[0] < consts[1] < consts[2]


@pytest.mark.parametrize("a,alpha,beta", [(1.0, 2.0, 0.0), (1.0, 1.5, 1.0), (3.0, 3.0, 3.0), (0.0, 0.0, 0.0)])
def test_mixed_parameter_guards(a, alpha, beta):
    with pytest.raises(ParameterError):
        mixed_power_check(a, alpha, beta, 1)


def test_quadrature_defaults():
    q = RadialQuadrature()
    assert q.nodes == 400 and q.r_min == 1e-4 and q.R == 40
    assert np.all(np.diff(q.r) > 0)
