import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
import zoo
from ermlab.classes import (
    AffineSubspace, Ball, Box, ConvexRegression1D, HalfSpace, IsotonicCone, LipschitzBall,
    constants, full_space, project, restrict_to_ball, singleton, violation,
)
from ermlab.design import DesignSet, PopulationSampler, empirical_norm
from ermlab.errors import DimensionMismatch, EvaluationUnavailable, UnboundedClass
from ermlab.population import population_distance
from ermlab.sampling import sample_member, sample_members

TOL = 1e-8


# -- worked examples -----------------------------------------------------------------
def test_halfspace_clamp():
    assert np.allclose(project(HalfSpace(2), [-1, 2]), [0, 2])


def test_isotonic_chain_example():
    assert np.allclose(project(IsotonicCone(DesignSet.grid(3)), [3, 1, 2]), [2, 2, 2])


def test_full_space_identity():
    y = np.array([0.3, -7, 2])
    assert np.array_equal(project(full_space(3), y), y)


def test_ball_violations():
    b = Ball(2, radius=1.0)
    assert violation(b, [0.6, 0.8]) == pytest.approx(0.0, abs=1e-15)
    assert violation(b, [3, 4]) == pytest.approx(4.0)


def test_isotonic_violation_is_order_deficit():
    assert violation(IsotonicCone(DesignSet.grid(2)), [2, 1]) == pytest.approx(1.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        project(Box(3), [1.0, 2.0])
    with pytest.raises(DimensionMismatch):
        violation(Ball(2), [1.0, 2.0, 3.0])


def test_nonpositive_tol_rejected():
    with pytest.raises(ValueError):
        Box(2).project([0, 0], tol=0)


def test_restrict_inactive_radius():
    box = Box(5, 0, 1)
    big = restrict_to_ball(box, np.zeros(5), 10.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.normal(size=5) * 3
        assert np.allclose(big.project(y), box.project(y), atol=1e-7)


def test_restrict_radius_zero_is_singleton():
    iso = IsotonicCone(DesignSet.grid(4))
    c = np.array([0.0, 0.1, 0.5, 0.5])
    r = restrict_to_ball(iso, c, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(10):
        assert np.array_equal(r.project(rng.normal(size=4)), c)


def test_restrict_nested_ball():
    r = restrict_to_ball(Ball(2, 1.0), np.zeros(2), 0.5)
    assert np.allclose(r.project([3, 4]), [0.3, 0.4])


def test_sample_member_box_and_ball():
    v = sample_member(Box(6, 0, 1), seed=3)
    assert np.all((v >= 0) & (v <= 1))
    w = sample_member(Ball(6, 1.0), seed=3)
    assert np.linalg.norm(w) <= 1 + TOL


def test_sample_member_reproducible():
    cls = IsotonicCone(DesignSet.grid(5), bounds=(0, 1))
    assert np.array_equal(sample_member(cls, 11), sample_member(cls, 11))


def test_sample_member_unbounded():
    with pytest.raises(UnboundedClass):
        sample_member(HalfSpace(3), seed=0)
    v = sample_member(HalfSpace(3), seed=0, box=(-1, 1))
    assert v[0] >= -TOL


def test_isotonic_box_centroid():
    cls = IsotonicCone(DesignSet.grid(3), bounds=(0.0, 1.0))
    draws = sample_members(cls, 10_000, seed=5)
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    exact = oracles.isotonic_box_centroid_n3()
    assert np.all(np.abs(mean - exact) <= 3 * se)


@pytest.mark.parametrize("method", ["rejection", "hit-and-run", "project"])
def test_sampling_methods_give_members(method):
    cls = IsotonicCone(DesignSet.grid(4), bounds=(0.0, 1.0))
    for v in sample_members(cls, 20, seed=2, method=method):
        assert cls.violation(v) <= TOL


def test_population_distance_examples():
    x = DesignSet.grid(4)
    s = PopulationSampler("uniform", 1)
    c = constants(x)
    a, b = np.full(4, 0.2), np.full(4, 0.7)
    assert population_distance(s, a, a, 10, seed=0, cls=c).value == 0
    for m in (1, 7, 100):
        assert population_distance(s, a, b, m, seed=m, cls=c).value == pytest.approx(0.5, abs=1e-14)


def test_population_distance_unavailable():
    with pytest.raises(EvaluationUnavailable):
        population_distance(PopulationSampler(), np.zeros(3), np.ones(3), 10, 0, cls=Box(3))


def test_population_distance_lipschitz_matches_large_sample():
    s = PopulationSampler("uniform", 1)
    cls = LipschitzBall(s.design(10, 4), L=1.0, bound=1.0)
    f, g = sample_members(cls, 2, seed=9)
    est = population_distance(s, f, g, 10 ** 5, seed=1, cls=cls)
    ef, eg = cls.extend(f), cls.extend(g)
    ref, ref_se = oracles.mc_squared_distance(ef, eg, lambda r, k: r.uniform(0, 1, (k, 1)),
                                              10 ** 7, seed=77)
    assert abs(est.sq - ref) <= 3 * np.hypot(est.sq_se, ref_se)


def test_population_distance_deterministic():
    s = PopulationSampler("gaussian", 2)
    cls = AffineSubspace(s.design(5, 0), basis="linear")
    f, g = cls.project(np.arange(5.0)), np.zeros(5)
    a = population_distance(s, f, g, 500, seed=3, cls=cls)
    b = population_distance(s, f, g, 500, seed=3, cls=cls)
    assert a == b


def test_singleton_and_halfspace_flags():
    assert singleton([1.0, 2.0]).project([5, 5]).tolist() == [1.0, 2.0]
    assert HalfSpace(2).diameter_bounded is False
    assert Box(2).diameter_bounded is True


def test_design_grid_and_distances():
    d = DesignSet.grid(4)
    D = d.distances()
    assert D.shape == (4, 4) and np.allclose(D, D.T) and np.all(np.isfinite(D))


def test_population_sampler_reproducible():
    s = PopulationSampler("sphere", 3)
    assert np.array_equal(s.sample(10, 4), s.sample(10, 4))


def test_declared_bound_respected():
    cls = LipschitzBall(DesignSet.grid(6), L=3.0, bound=1.0)
    v = cls.project(np.array([5, -5, 5, -5, 5, -5.0]))
    assert np.max(np.abs(v)) <= 1 + TOL


def test_ties_are_merged():
    x = DesignSet(np.array([0.0, 0.5, 0.5, 1.0]))
    v = ConvexRegression1D(x).project([1.0, 0.0, 2.0, 1.0])
    assert v[1] == pytest.approx(v[2])


# -- oracle equivalence ----------------------------------------------------------------
@pytest.mark.parametrize("seed", range(20))
def test_isotonic_matches_minmax_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    y = rng.normal(size=n) * 2
    v = IsotonicCone(DesignSet.grid(n)).project(y)
    assert np.max(np.abs(v - oracles.isotonic_minmax(y))) <= 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_convex_matches_active_set_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    x = np.sort(rng.uniform(0, 1, n))
    y = rng.normal(size=n)
    v = ConvexRegression1D(DesignSet(x)).project(y)
    ref = oracles.cone_projection_bruteforce(y, oracles.second_difference_rows(x))
    assert np.max(np.abs(v - ref)) <= 1e-6


# -- properties over all kinds ------------------------------------------------------------
vec = st.lists(st.floats(-5, 5, allow_nan=False), min_size=8, max_size=8).map(np.array)


@pytest.mark.parametrize("kind", zoo.KINDS)
@given(y=vec)
def test_projection_is_member_and_idempotent(kind, y):
    cls = zoo.make(kind)
    v = cls.project(y, TOL)
    assert cls.violation(v) <= TOL
    assert np.max(np.abs(cls.project(v, TOL) - v)) <= 2 * TOL + 1e-9 * np.max(np.abs(v), initial=1)


@pytest.mark.parametrize("kind", zoo.KINDS)
@given(a=vec, b=vec)
def test_projection_contracts(kind, a, b):
    cls = zoo.make(kind)
    lhs = empirical_norm(cls.project(a, TOL) - cls.project(b, TOL))
    assert lhs <= empirical_norm(a - b) + 10 * TOL


@pytest.mark.parametrize("kind", zoo.KINDS)
@given(y=vec, seed=st.integers(0, 2 ** 31))
def test_variational_inequality(kind, y, seed):
    cls = zoo.make(kind)
    v = cls.project(y, TOL)
    us = sample_members(cls, 50, seed=seed, box=zoo.member_box(cls)
                        if cls.bounding_box() is None else None)
    gaps = (us - v) @ (y - v) / cls.n
    assert gaps.max() <= 10 * TOL


@given(v=vec, w=vec)
def test_violation_zero_iff_member(v, w):
    cls = Box(8, -1, 1)
    assert (cls.violation(v) == 0) == bool(np.all(np.abs(v) <= 1))
    # continuity: violation is 1-Lipschitz for the box
    assert abs(cls.violation(v) - cls.violation(w)) <= np.max(np.abs(v - w)) + 1e-12


@pytest.mark.parametrize("scale", [1.0, 10.0, 100.0, 1000.0])
def test_polyhedral_projection_large_targets(scale):
    # an unnormalized least-distance solve returned non-members at scale 100 and up
    cls = LipschitzBall(DesignSet.grid(10), L=1.0, bound=1.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert cls.violation(cls.project(rng.normal(size=10) * scale)) <= TOL


def test_least_distance_known_solution():
    from ermlab.solvers import least_distance
    G = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(least_distance(G, np.array([2.0, -1.0])), [2.0, 0.0])
    assert np.allclose(least_distance(G, np.array([200.0, 300.0])), [200.0, 300.0])
