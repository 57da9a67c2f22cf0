import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import zoo
from ermlab.classes import Ball, HalfSpace, IsotonicCone, constants
from ermlab.design import DesignSet, empirical_norm
from ermlab.erm import (
    NoiseModel, empirical_loss, generate_noise, generate_noise_batch, in_O_delta,
    noise_correlation, o_delta_geometric_check, shifted_loss, solve_erm,
)
from ermlab.errors import DimensionMismatch, NotAMember
from ermlab.sampling import sample_members

TOL = 1e-8


def test_rademacher_support():
    xi = generate_noise(NoiseModel("Rademacher"), 4, seed=0)
    assert set(np.unique(xi)) <= {-1.0, 1.0}


def test_gaussian_moments_large_sample():
    batch = generate_noise_batch(NoiseModel("GaussianIsotropic"), 1, 10 ** 6, seed=1)[:, 0]
    assert 0.99 <= batch.var(ddof=1) <= 1.01
    assert abs(batch.mean()) <= 5e-3


@pytest.mark.parametrize("kind", ["GaussianIsotropic", "Rademacher", "UniformBounded"])
def test_moments_every_kind(kind):
    m = NoiseModel(kind, sigma=2.0)
    batch = generate_noise_batch(m, 2, 10 ** 6, seed=7)
    assert np.all(np.abs(batch.mean(axis=0)) <= 5e-3 * 2)
    assert np.all(np.abs(batch.var(axis=0) / 4.0 - 1) <= 0.01)
    if m.gamma2 is not None:
        assert np.max(np.abs(batch)) <= m.gamma2


def test_noise_deterministic():
    m = NoiseModel("uniform", 0.5)
    assert np.array_equal(generate_noise(m, 5, 3), generate_noise(m, 5, 3))


def test_noise_labels():
    assert NoiseModel("Rademacher").lcp_certified is False
    assert NoiseModel("GaussianIsotropic").lcp_certified is True
    assert NoiseModel("gaussian").kind == "GaussianIsotropic"


def test_constants_example():
    sol = solve_erm(constants(2), np.zeros(2), np.array([0.0, 2.0]))
    assert np.allclose(sol.fhat, 1.0) and sol.loss == pytest.approx(1.0)
    assert sol.shifted_loss == pytest.approx(1.0 - 2.0)


@pytest.mark.parametrize("kind", zoo.KINDS)
def test_noiseless_realizable(kind):
    cls = zoo.make(kind)
    f = sample_members(cls, 1, seed=0, box=zoo.member_box(cls) if cls.bounding_box() is None else None)[0]
    sol = solve_erm(cls, f, np.zeros(cls.n))
    assert np.allclose(sol.fhat, f, atol=1e-7) and sol.loss <= 1e-12


def test_halfspace_example():
    sol = solve_erm(HalfSpace(2), np.zeros(2), np.array([-1.0, 2.0]))
    assert np.allclose(sol.fhat, [0, 2]) and sol.loss == pytest.approx(0.5)


def test_solution_json_fields():
    sol = solve_erm(Ball(3), np.zeros(3), np.array([1.0, 2.0, 2.0]), seed=4)
    d = json.loads(json.dumps(sol.to_dict()))
    assert set(d) == {"fhat", "loss", "shifted_loss", "kkt_gap", "seed", "tol"}


@pytest.mark.parametrize("kind", zoo.KINDS)
def test_solution_invariants(kind):
    cls = zoo.make(kind)
    rng = np.random.default_rng(3)
    for _ in range(5):
        xi = rng.normal(size=cls.n) * 2
        sol = solve_erm(cls, np.zeros(cls.n), xi, candidates=[cls.project(rng.normal(size=cls.n))])
        assert cls.violation(sol.fhat) <= TOL
        assert sol.kkt_gap <= 10 * TOL
        probes = sample_members(cls, 20, 1, box=zoo.member_box(cls) if cls.bounding_box() is None else None)
        assert all(sol.loss <= empirical_loss(p, sol.y) + 1e-12 for p in probes)


def test_in_O_delta_examples():
    cls = constants(2)
    sol = solve_erm(cls, np.zeros(2), np.array([0.0, 2.0]))
    c = np.full(2, 1.1)
    assert in_O_delta(cls, sol, sol.fhat, 0.0)
    assert in_O_delta(cls, sol, c, 0.02)
    assert not in_O_delta(cls, sol, c, 0.005)
    # boundary inclusive: delta equal to the excess loss
    assert in_O_delta(cls, sol, c, empirical_loss(c, sol.y) - sol.loss)
    lhs, rhs, holds = o_delta_geometric_check(sol, c, 0.02)
    assert lhs == pytest.approx(0.01) and rhs == 0.02 and holds
    assert o_delta_geometric_check(sol, sol.fhat, 0.1)[0] == 0


def test_in_O_delta_rejects_nonmember():
    cls = constants(2)
    sol = solve_erm(cls, np.zeros(2), np.array([0.0, 2.0]))
    with pytest.raises(NotAMember):
        in_O_delta(cls, sol, np.array([0.0, 1.0]), 0.1)


def test_noise_correlation_examples():
    xi = np.array([-1.0, 0.0])
    assert noise_correlation(np.ones(2), np.ones(2), xi) == 0
    assert noise_correlation(xi, np.zeros(2), xi) == pytest.approx(empirical_norm(xi) ** 2)
    assert noise_correlation(np.array([1.0, -2.0]), np.zeros(2), xi) == pytest.approx(-0.5)
    with pytest.raises(DimensionMismatch):
        noise_correlation(np.ones(2), np.ones(3), xi)


triple = st.tuples(*[st.lists(st.floats(-10, 10), min_size=6, max_size=6).map(np.array)] * 3)


@given(t=triple)
def test_loss_decomposition(t):
    f, fs, xi = t
    lhs = shifted_loss(f, fs, xi)
    rhs = -2 * noise_correlation(f, fs, xi) + empirical_norm(f - fs) ** 2
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(seed=st.integers(0, 2 ** 31), d1=st.floats(0, 1), d2=st.floats(0, 1))
def test_o_delta_monotone(seed, d1, d2):
    d1, d2 = sorted((d1, d2))
    cls = IsotonicCone(DesignSet.grid(6), bounds=(0, 1))
    sol = solve_erm(cls, np.linspace(0, 1, 6), generate_noise(NoiseModel(), 6, seed))
    for c in sample_members(cls, 20, seed):
        if in_O_delta(cls, sol, c, d1):
            assert in_O_delta(cls, sol, c, d2)
            assert o_delta_geometric_check(sol, c, d1)[2]


@pytest.mark.parametrize("kind", zoo.KINDS)
@given(seed=st.integers(0, 2 ** 31))
def test_solution_map_contracts_in_noise(kind, seed):
    cls = zoo.make(kind)
    rng = np.random.default_rng(seed)
    fs = rng.normal(size=cls.n)
    x1, x2 = rng.normal(size=(2, cls.n))
    a = solve_erm(cls, fs, x1, probes=False).fhat
    b = solve_erm(cls, fs, x2, probes=False).fhat
    assert empirical_norm(a - b) <= empirical_norm(x1 - x2) + 10 * TOL
