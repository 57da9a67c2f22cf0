import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ermlab.classes import AffineSubspace, Ball, Box, HalfSpace, IsotonicCone, constants, full_space, singleton
from ermlab.design import DesignSet, PopulationSampler
from ermlab.erm import NoiseModel, empirical_loss, generate_noise, in_O_delta, solve_erm
from ermlab.errors import AsymmetricNoise, NoConvergence
from ermlab.fitting import fit_exponent
from ermlab.stability import (
    StabilityConfig, estimate_rho_O, estimate_rho_S, fixed_point_search, jagged_probe,
    o_delta_diameter, o_delta_probe,
)

G = NoiseModel()
U01 = PopulationSampler("uniform", 1)


def _solution(cls, seed=0, fstar=None):
    fstar = np.zeros(cls.n) if fstar is None else fstar
    return solve_erm(cls, fstar, generate_noise(G, cls.n, seed), probes=False)


# -- near-minimizer sets ---------------------------------------------------------------
def test_zero_delta_has_zero_diameter():
    sol = _solution(IsotonicCone(DesignSet.grid(8)))
    assert o_delta_diameter(IsotonicCone(DesignSet.grid(8)), sol, 0.0) <= 2e-8


def test_halfspace_interior_is_full_ball():
    cls = HalfSpace(6)
    seed = next(s for s in range(100) if generate_noise(G, 6, s)[0] > 0)
    sol = _solution(cls, seed)
    assert o_delta_diameter(cls, sol, 0.04, directions=128) == pytest.approx(0.4, rel=0.05)


def test_negative_delta_rejected():
    with pytest.raises(ValueError):
        o_delta_probe(Box(3), _solution(Box(3)), -0.1)


@pytest.mark.parametrize("make", [
    lambda: Box(6, -1, 1),
    lambda: IsotonicCone(DesignSet.grid(6)),
    lambda: Ball(6, 1.0),
    lambda: constants(6),
])
@settings(max_examples=15)
@given(seed=st.integers(0, 2 ** 31), delta=st.floats(1e-3, 1.0))
def test_probe_points_are_near_minimizers(make, seed, delta):
    cls = make()
    sol = _solution(cls, seed)
    probe = o_delta_probe(cls, sol, delta, directions=8, seed=seed)
    for p in probe.points:
        assert empirical_loss(p, sol.y) - sol.loss <= delta + 1e-7
        assert in_O_delta(cls, sol, cls.project(p), delta + 1e-7)
    # contained in the sqrt(delta) ball around the fit
    assert probe.diameter <= 2 * np.sqrt(delta) + 1e-7


def test_diameter_monotone_in_delta():
    cls = IsotonicCone(DesignSet.grid(10))
    sol = _solution(cls, 3)
    ds = [o_delta_diameter(cls, sol, d, 16, seed=1) for d in (0.01, 0.05, 0.2)]
    assert ds == sorted(ds)


def test_halfspace_diameter_scales_like_sqrt_delta():
    cls = HalfSpace(4)
    seed = next(s for s in range(100) if generate_noise(G, 4, s)[0] > 0)
    sol = _solution(cls, seed)
    deltas = [0.01, 0.02, 0.04, 0.08, 0.16]
    fit = fit_exponent([(d, o_delta_diameter(cls, sol, d, 32, 0)) for d in deltas])
    assert 0.4 <= fit.exponent <= 0.6


# -- stability radii ---------------------------------------------------------------------
def test_config_must_be_positive():
    with pytest.raises(ValueError):
        StabilityConfig(M=0)
    with pytest.raises(ValueError):
        StabilityConfig(c_I=-1)


def test_rho_S_affine_bounded_by_perturbation():
    cfg = StabilityConfig()
    eps = 0.1
    cls = AffineSubspace(DesignSet.grid(8), basis="linear")
    est = estimate_rho_S(cls, np.zeros(8), G, cfg, eps, R_outer=20, R_inner=20, seed=0)
    assert 0 < est.value <= (cfg.M * eps) ** 2 + 1e-12


def test_rho_S_constants():
    # the fit moves by the mean of the perturbation, at most the full radius
    cfg = StabilityConfig()
    eps = 0.05
    est = estimate_rho_S(constants(10), np.zeros(10), G, cfg, eps, 30, 30, seed=1)
    assert est.value <= (cfg.M * eps) ** 2 + 1e-12
    assert np.all(est.samples >= 0)


def test_rho_S_zero_radius():
    est = estimate_rho_S(Box(5), np.zeros(5), NoiseModel(sigma=0.0), StabilityConfig(), 0.0,
                         10, 10, seed=0)
    assert est.value == 0


def test_rho_O_singleton_and_constants():
    cfg = StabilityConfig(probe_directions=8)
    eps = 0.1
    f0 = lambda x: np.zeros(len(x))
    pt = constants(U01.design(6, 0), bounds=(0.3, 0.3))
    assert estimate_rho_O(pt, U01, f0, G, cfg, eps, 100, 0, n=6, m=256).value <= 1e-14
    est = estimate_rho_O(constants(U01.design(6, 0)), U01, f0, G, cfg, eps, 100, 0, n=6, m=256)
    assert est.value == pytest.approx(4 * cfg.M_prime * eps ** 2, rel=1e-6)


def test_rho_O_needs_replicates():
    with pytest.raises(ValueError):
        estimate_rho_O(constants(U01.design(4, 0)), U01, lambda x: 0 * x[:, 0], G,
                       StabilityConfig(), 0.1, 50, 0, n=4)


def test_radius_ordering_for_constants():
    # for constants the near-minimizer diameter dominates the stability move
    cfg = StabilityConfig(probe_directions=8)
    n, eps = 8, 0.1
    fam = constants(U01.design(n, 0))
    o = estimate_rho_O(fam, U01, lambda x: np.zeros(len(x)), G, cfg, eps, 100, 1, n=n, m=256)
    s = estimate_rho_S(fam, np.zeros(n), G, cfg, eps, 30, 30, seed=1, sampler=U01, m=256)
    assert s.value <= o.value + 3 * (s.se + o.se)


# -- flipped noise -------------------------------------------------------------------------
def test_full_space_flipped_loss_identity():
    s = jagged_probe(full_space(7), np.zeros(7), G, R=200, seed=0)
    assert np.max(np.abs(s.e - s.d ** 2)) <= 1e-10


@pytest.mark.parametrize("cls", [Box(5, -1, 1), IsotonicCone(DesignSet.grid(5)), Ball(5, 1.0)])
def test_flipped_excess_nonnegative(cls):
    s = jagged_probe(cls, np.zeros(5), G, R=100, seed=2)
    assert s.e.min() >= -1e-12


def test_ball_symmetry_check():
    s = jagged_probe(Ball(8, 1.0), np.zeros(8), G, R=2000, seed=3)
    assert s.ks_statistic <= s.ks_critical_1pct


def test_asymmetric_noise_rejected():
    class Skewed(NoiseModel):
        symmetric = False
    with pytest.raises(AsymmetricNoise):
        jagged_probe(Box(3), np.zeros(3), Skewed(), R=10, seed=0)


def test_exceed_fraction_reported():
    s = jagged_probe(Box(4, -1, 1), np.zeros(4), G, R=50, seed=0, eps_star=0.5)
    assert 0 <= s.exceed_fraction <= 1


# -- fixed points ------------------------------------------------------------------------------
def test_constants_fixed_point_is_center():
    res = fixed_point_search(constants(8, bounds=(-1, 1)), G, R_inner=500, seed=0, R_decomp=500,
                             start=np.zeros(8))
    # the mean of 500 fits carries Monte Carlo error of about 1/sqrt(8 * 500)
    assert np.max(np.abs(res.fstar)) <= 3 / np.sqrt(8 * 500) and res.residual <= 1e-2


def test_box_small_noise_fixed_point():
    res = fixed_point_search(Box(4, 0, 1), NoiseModel(sigma=0.01), R_inner=500, seed=1, R_decomp=500)
    assert np.allclose(res.fstar, 0.5, atol=1e-2) and res.success


def test_singleton_converges_immediately():
    res = fixed_point_search(singleton([0.2, 0.4]), G, R_inner=500, R_decomp=500)
    assert res.iterations == 1 and res.residual == 0


def test_non_convergence():
    with pytest.raises(NoConvergence):
        fixed_point_search(IsotonicCone(DesignSet.grid(8), bounds=(0, 1)), G, R_inner=500,
                           max_iter=1, tol_fp=1e-12, start=np.linspace(0, 1, 8))


def test_fixed_point_needs_bounded_class():
    with pytest.raises(ValueError):
        fixed_point_search(HalfSpace(3), G, R_inner=500)
