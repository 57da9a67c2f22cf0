import numpy as np
import pytest

from ermlab.classes import Ball, Box, FunctionClass, IsotonicCone, constants, full_space
from ermlab.decomposition import (
    FIELDS, SCAN_COLUMNS, DecompositionReport, fixed_design_decomposition,
    random_design_decomposition, rate_scan, scan_rows,
)
from ermlab.design import DesignSet, PopulationSampler
from ermlab.erm import NoiseModel
from ermlab.errors import EvaluationUnavailable, NonConvergence, SolverFailure
from ermlab.fitting import fit_exponent

G = NoiseModel()


def within(value, target, se, k=3.0):
    return abs(value - target) <= k * se + 1e-12


def test_full_space_variance_one():
    rep = fixed_design_decomposition(full_space(10), np.zeros(10), G, R=2000, seed=1)
    assert within(rep.variance, 1.0, rep.se["variance"])
    assert within(rep.bias_sq, 0.0, rep.se["bias_sq"])
    assert rep.identities_hold()


def test_constants_variance_one_over_n():
    n = 20
    rep = fixed_design_decomposition(constants(n), np.full(n, 0.7), G, R=2000, seed=2)
    assert within(rep.variance, 1 / n, rep.se["variance"])
    assert within(rep.bias_sq, 0.0, rep.se["bias_sq"])


def test_zero_noise_is_deterministic_distance():
    cls = IsotonicCone(DesignSet.grid(5))
    fs = np.array([1.0, 0.0, 2.0, 1.0, 3.0])
    rep = fixed_design_decomposition(cls, fs, NoiseModel(sigma=0.0), R=10)
    d2 = np.mean((cls.project(fs) - fs) ** 2)
    assert rep.variance == 0 and rep.risk == pytest.approx(d2, abs=1e-14)


def test_fixed_report_fields_and_round_trip():
    rep = fixed_design_decomposition(Ball(6, 1.0), np.ones(6), G, R=50, seed=3)
    assert rep.norm_used == "empirical" and rep.replicates == (1, 50)
    assert all(getattr(rep, f) >= 0 for f in ("variance", "cond_var", "var_cond_mean"))
    assert DecompositionReport.from_dict(rep.to_dict()) == rep


def test_random_design_constants():
    n = 10
    s = PopulationSampler("uniform", 1)
    rep = random_design_decomposition(constants(s.design(n, 0)), s, lambda z: np.zeros(len(z)),
                                      G, n, R_X=200, R_xi=100, m=1024, seed=4)
    assert within(rep.var_cond_mean, 0.0, rep.se["var_cond_mean"])
    assert within(rep.cond_var, 1 / n, rep.se["cond_var"])
    assert rep.identities_hold()
    assert rep.norm_used.startswith("population")


def test_random_design_needs_evaluable_class():
    s = PopulationSampler()
    with pytest.raises(EvaluationUnavailable):
        random_design_decomposition(Box(4), s, lambda z: np.zeros(len(z)), G, 4, R_X=2, R_xi=2)


def test_replicate_minimums():
    with pytest.raises(ValueError):
        fixed_design_decomposition(Box(3), np.zeros(3), G, R=1)


def test_rate_scan_constants_exponent():
    scan = rate_scan(lambda n: constants(n), [2 ** k for k in range(6, 13)],
                     lambda c: np.zeros(c.n), G, R=2000, seed=5)
    fit = fit_exponent([(n, r.variance) for n, r in scan])
    assert abs(fit.exponent + 1) <= 0.1
    rows = scan_rows(scan)
    assert len(rows[0]) == len(SCAN_COLUMNS)


def test_rate_scan_zero_noise():
    scan = rate_scan(lambda n: IsotonicCone(DesignSet.grid(n)), [8, 16, 32, 64],
                     lambda c: np.linspace(0, 1, c.n), NoiseModel(sigma=0), R=5)
    assert all(r.variance == 0 for _, r in scan)


@pytest.mark.parametrize("grid", [[8, 16, 32], [8, 16, 16, 32], [32, 16, 8, 4]])
def test_rate_scan_grid_checks(grid):
    with pytest.raises(ValueError):
        rate_scan(lambda n: constants(n), grid, lambda c: np.zeros(c.n), G, R=5)


class _Flaky(FunctionClass):
    """Box projection that refuses targets whose first coordinate exceeds a cut."""

    kind = "Flaky"

    def __init__(self, n, cut):
        super().__init__(n)
        self.cut = cut

    def _project(self, y, tol):
        if y[0] > self.cut:
            raise NonConvergence(1, 1.0, "test")
        return np.clip(y, -1, 1)

    def _violation(self, v):
        return float(max(0.0, np.max(np.abs(v)) - 1))


def test_failures_counted_below_threshold():
    rep = fixed_design_decomposition(_Flaky(3, 3.0), np.zeros(3), G, R=2000, seed=0)
    assert 0 < rep.failures <= 20


def test_failures_above_threshold_abort():
    with pytest.raises(SolverFailure):
        fixed_design_decomposition(_Flaky(3, 1.5), np.zeros(3), G, R=500, seed=0)


@pytest.mark.parametrize("make", [
    lambda n: Box(n, 0, 1),
    lambda n: IsotonicCone(DesignSet.grid(n), bounds=(0, 1)),
    lambda n: constants(n, bounds=(0, 1)),
    lambda n: Ball(n, 0.5, norm="empirical"),
])
def test_minimal_risk_floor(make):
    for n in (4, 16, 64):
        for fs in (np.zeros(n), np.full(n, 0.5)):
            cls = make(n)
            rep = fixed_design_decomposition(cls, fs, G, R=1000, seed=n)
            assert rep.risk >= 1 / (32 * n) - 3 * rep.se["risk"]


def test_fields_constant():
    assert FIELDS == ("risk", "variance", "bias_sq", "cond_var", "var_cond_mean")
