import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ermlab.classes import AffineSubspace, Box, IsotonicCone, LipschitzBall, constants
from ermlab.design import DesignSet, PopulationSampler
from ermlab.errors import InterpolatorSamplingUnavailable, NoCrossing
from ermlab.geometry import (
    EntropyCurve, empirical_entropy_curve, generalization_diameter, geometry_report,
    greedy_net, greedy_net_from_pool, isometry_remainders, member_pool, solve_balancing,
    solve_epsilon_U,
)

U01 = PopulationSampler("uniform", 1)


# -- nets ------------------------------------------------------------------------
def test_single_center_when_eps_exceeds_diameter():
    cls = IsotonicCone(DesignSet.grid(5), bounds=(0, 1))
    assert len(greedy_net(cls, 2.0, 200, seed=0)) == 1


def test_interval_of_constants():
    cover, pack = oracles.interval_covering_bounds(1.0, 0.1)
    cls = constants(DesignSet.grid(4), bounds=(0, 1))
    for seed in range(5):
        k = len(greedy_net(cls, 0.1, 400, seed=seed))
        assert cover <= k <= pack


def test_tiny_eps_counts_distinct_members():
    pool = np.repeat(np.random.default_rng(0).uniform(size=(7, 3)), 3, axis=0)
    assert len(greedy_net_from_pool(pool, 1e-12)) == 7


@given(seed=st.integers(0, 10 ** 6), eps=st.floats(0.02, 0.5))
def test_net_properties(seed, eps):
    pool = np.random.default_rng(seed).uniform(size=(80, 4))
    idx = greedy_net_from_pool(pool, eps)
    C = pool[idx]
    d = np.sqrt(((pool[:, None] - C[None]) ** 2).mean(axis=2))
    assert d.min(axis=1).max() <= eps
    dc = np.sqrt(((C[:, None] - C[None]) ** 2).mean(axis=2))
    assert np.all(dc[np.triu_indices(len(C), 1)] > eps)
    # packing/covering sandwich
    assert len(greedy_net_from_pool(pool, 2 * eps)) <= len(idx)


def test_empirical_curve_regularized():
    cls = IsotonicCone(DesignSet.grid(6), bounds=(0, 1))
    grid = [0.05, 0.1, 0.2, 0.4, 0.8]
    curve = empirical_entropy_curve(cls, grid, 300, seed=1)
    vals = [curve(e) for e in grid]
    assert all(a >= b for a, b in zip(vals, vals[1:])) and min(vals) >= 0
    rows = curve.to_rows()
    assert [r[0] for r in rows] == sorted(grid)


# -- balancing ---------------------------------------------------------------------
def test_balancing_examples():
    assert solve_balancing(EntropyCurve.power(1.0), 1000) == pytest.approx(0.1, abs=1e-6)
    e = solve_balancing(EntropyCurve.log(10.0), 1000)
    assert abs(10 * np.log(1 / e) - 1000 * e * e) < 1e-3 and e == pytest.approx(0.14, abs=0.005)
    with pytest.raises(NoCrossing):
        solve_balancing(EntropyCurve.zero(), 1000)


@given(n1=st.integers(1, 10 ** 6), n2=st.integers(1, 10 ** 6))
def test_balancing_monotone_in_n(n1, n2):
    c = EntropyCurve.power(1.0)
    a, b = sorted((n1, n2))
    assert solve_balancing(c, b) <= solve_balancing(c, a) + 1e-6


def test_epsilon_U_examples():
    c = EntropyCurve.power(1.0)
    r0 = solve_epsilon_U(c, 1000, 0.0)
    assert r0.eps_U == r0.eps_star
    r = solve_epsilon_U(c, 1000, 0.01)
    assert r.eps_tilde == pytest.approx(0.1, abs=1e-6)
    r2 = solve_epsilon_U(c, 1000, 0.0, I_L=0.5)
    assert r2.eps_V ** 2 == pytest.approx(0.5)


@given(iu=st.floats(0, 1), il=st.floats(0, 1), n=st.integers(10, 10 ** 5))
def test_geometry_report_invariants(iu, il, n):
    rep = geometry_report(EntropyCurve.power(1.0), n, I_L=il, I_U=iu)
    assert rep.eps_U >= rep.eps_star
    assert rep.eps_V ** 2 == pytest.approx(max(rep.eps_U ** 2, il))
    assert rep.confidence == pytest.approx(1 - 1 / n)
    assert "estimate_is_lower_bound" in rep.flags


# -- isometry remainders ---------------------------------------------------------------
def test_constants_remainders_zero():
    est = isometry_remainders(constants(U01.design(8, 0)), U01, 8, 200, 8, seed=1, pool_size=32,
                              box=(-2.0, 2.0))
    assert est.I_L == 0 and est.I_U == 0


def test_singleton_remainders_zero():
    # the constant 0.3 as an evaluable one-member class
    point = constants(U01.design(6, 0), bounds=(0.3, 0.3))
    est = isometry_remainders(point, U01, 6, 100, 6, seed=2, pool_size=8)
    assert est.I_L == 0 and est.I_U == 0


def test_lipschitz_remainders_match_many_pair_oracle():
    fam = LipschitzBall(U01.design(64, 0), L=1.0, bound=1.0)
    est = isometry_remainders(fam, U01, 64, 10 ** 4, 64, seed=3, pool_size=128, m=2048)
    ref = isometry_remainders(fam, U01, 64, 10 ** 6, 64, seed=3, pool_size=128, m=2048)
    assert est.I_L == pytest.approx(ref.I_L, rel=0.10)
    assert est.I_U == pytest.approx(ref.I_U, rel=0.10)
    # nested pair draws: per-design maxima can only grow
    assert np.all(est.per_design_L <= ref.per_design_L + 1e-15)
    assert np.all(est.per_design_U <= ref.per_design_U + 1e-15)


def test_isometry_argument_checks():
    with pytest.raises(ValueError):
        isometry_remainders(constants(4), U01, 8, 10, 4, seed=0)


# -- generalization diameter ---------------------------------------------------------------
def test_constants_pinned():
    assert generalization_diameter(constants(U01.design(3, 0)), U01, lambda x: 0 * x[:, 0], 3, 0) == 0


def test_affine_determined():
    s = PopulationSampler("gaussian", 2)
    fam = AffineSubspace(s.design(5, 0), basis="linear")
    assert generalization_diameter(fam, s, lambda x: x[:, 0] - x[:, 1], 5, seed=1) == 0


def test_lipschitz_tent():
    fam = LipschitzBall(DesignSet(np.array([0.0, 1.0])), L=1.0, bound=1.0)
    d = generalization_diameter(fam, U01, np.zeros(2), 2, seed=0,
                                design=DesignSet(np.array([0.0, 1.0])), m=2000)
    assert d == pytest.approx(oracles.tent_diameter_uniform01(), rel=0.05)


def test_fixed_design_kind_unavailable():
    with pytest.raises(InterpolatorSamplingUnavailable):
        generalization_diameter(Box(3), U01, np.zeros(3), 3, seed=0)


def test_member_pool_reproducible():
    cls = LipschitzBall(DesignSet.grid(5), L=1.0, bound=1.0)
    assert np.array_equal(member_pool(cls, 10, 3), member_pool(cls, 10, 3))
