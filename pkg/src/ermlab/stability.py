"""Stability probes: near-minimizer diameters, stability radii, flipped noise, fixed points."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.stats import ks_2samp

from .classes import DEFAULT_TOL, FunctionClass
from .decomposition import DecompositionReport, fixed_design_decomposition
from .design import PopulationSampler, derive_seed
from .erm import ErmSolution, NoiseModel, empirical_loss, generate_noise, solve_erm
from .errors import AsymmetricNoise, EvaluationUnavailable, NoConvergence


@dataclass(frozen=True)
class StabilityConfig:
    M: float = 4.0
    M_prime: float = 8.0
    c_I: float = 0.1
    c_2: float = 0.05
    probe_directions: int = 64

    def __post_init__(self):
        for name in ("M", "M_prime", "c_I", "c_2", "probe_directions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def _clamp_level(p: float, R: int) -> float:
    return float(min(1.0, max(1.0 / R, p)))


def _order_stat(values: np.ndarray, level: float) -> float:
    """Smallest t with empirical P(values <= t) >= level."""
    v = np.sort(np.asarray(values, dtype=float))
    k = int(np.ceil(level * len(v) - 1e-12))
    return float(v[max(k, 1) - 1])


def _boot_se(values, level, seed, B=200):
    rng = np.random.default_rng(seed)
    v = np.asarray(values, dtype=float)
    stats = [_order_stat(v[rng.integers(0, len(v), len(v))], level) for _ in range(B)]
    return float(np.std(stats, ddof=1))


# -- near-minimizer sets ------------------------------------------------------------
_S_MAX = 1e3


def o_delta_support(cls: FunctionClass, solution: ErmSolution, delta: float, u: np.ndarray,
                    tol: Optional[float] = None) -> np.ndarray:
    """Point of the delta-near-minimizer set maximizing ``<u, v>``.

    The maximizer has the form ``P(Y + s u)``; ``s`` is tuned so that the loss
    constraint is tight (or taken large when it never binds).
    """
    tol = solution.tol if tol is None else tol
    y, fhat = solution.y, solution.fhat
    if delta == 0:
        return fhat.copy()
    target = solution.loss + delta
    scale = max(1.0, float(np.sqrt(np.mean(y * y))))

    def point(s):
        return cls.project(y + s * u, tol)

    def g(s):
        return empirical_loss(point(s), y) - target

    s_hi = scale * np.sqrt(delta) * np.sqrt(cls.n) / max(np.linalg.norm(u), 1e-300)
    while g(s_hi) < 0:
        if s_hi > _S_MAX * scale:
            return point(s_hi)  # loss constraint never binds: support point of the class
        s_hi *= 4.0
    s = brentq(g, 0.0, s_hi, xtol=1e-14 * s_hi, rtol=1e-12, maxiter=200)
    # keep the returned point inside the set despite root-finding rounding
    for factor in (1.0, 1 - 1e-12, 1 - 1e-9, 1 - 1e-6, 1 - 1e-3):
        v = point(s * factor)
        if empirical_loss(v, y) <= target:
            break
    return v


@dataclass
class ODeltaProbe:
    diameter: float
    points: np.ndarray  # support points found (rows)
    delta: float

    def to_dict(self):
        return {"diameter": self.diameter, "delta": self.delta, "probes": int(len(self.points))}


def _max_pairwise(points: np.ndarray, dist: Optional[Callable] = None) -> float:
    if len(points) < 2:
        return 0.0
    if dist is None:
        G = points @ points.T
        sq = np.diag(G)
        D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0) / points.shape[1]
        return float(np.sqrt(D2.max()))
    return float(max(dist(a, b) for i, a in enumerate(points) for b in points[i + 1:]))


def o_delta_probe(cls: FunctionClass, solution: ErmSolution, delta: float,
                  directions: int = 64, seed: int = 0,
                  dist: Optional[Callable] = None) -> ODeltaProbe:
    """Support points in ``directions`` random directions (and their negatives).

    The diameter is the largest distance among them, a lower bound on the true
    diameter that can only grow with more directions.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if delta == 0:
        return ODeltaProbe(0.0, solution.fhat[None, :].copy(), 0.0)
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(directions):
        u = rng.standard_normal(cls.n)
        u /= np.linalg.norm(u)
        pts.append(o_delta_support(cls, solution, delta, u))
        pts.append(o_delta_support(cls, solution, delta, -u))
    pts = np.array(pts)
    return ODeltaProbe(_max_pairwise(pts, dist), pts, float(delta))


def o_delta_diameter(cls: FunctionClass, solution: ErmSolution, delta: float,
                     directions: int = 64, seed: int = 0) -> float:
    """Empirical-norm diameter (lower bound) of the delta-near-minimizer set."""
    return o_delta_probe(cls, solution, delta, directions, seed).diameter


# -- stability radii ------------------------------------------------------------------
@dataclass
class RadiusEstimate:
    value: float
    se: float
    level: float
    samples: np.ndarray
    constants: dict
    note: str = ""

    def to_dict(self):
        return {"value": self.value, "se": self.se, "level": self.level,
                "samples": self.samples.tolist(), "constants": dict(self.constants),
                "note": self.note}


def _sphere(rng, n, radius_emp):
    z = rng.standard_normal(n)
    return z * (radius_emp * np.sqrt(n) / np.linalg.norm(z))


def estimate_rho_S(
    cls: FunctionClass,
    fstar,
    model: NoiseModel,
    config: StabilityConfig,
    eps_star: float,
    R_outer: int,
    R_inner: int,
    seed: int,
    sampler: Optional[PopulationSampler] = None,
    m: int = 2048,
    tol: float = DEFAULT_TOL,
) -> RadiusEstimate:
    """Stability radius under noise perturbations of empirical size ``M eps_star``.

    Movement is measured in the empirical norm, or in the population norm on
    ``m`` fresh covariates when ``sampler`` is given (the class must then be
    evaluable). Finitely many perturbations per noise draw are tried, which can
    only over-estimate robustness.
    """
    fstar = np.asarray(fstar, dtype=float)
    n = cls.n
    radius = config.M * eps_star
    Z = None
    if sampler is not None:
        if not cls.evaluable:
            raise EvaluationUnavailable(f"{cls.kind} cannot be evaluated off the design")
        Z = sampler.sample(m, derive_seed(seed, 40))

    def move(a, b):
        if Z is None:
            d = a - b
            return float(d @ d / n)
        d = cls.extend(a)(Z) - cls.extend(b)(Z)
        return float(np.mean(d * d))

    worst = np.zeros(R_outer)
    for r in range(R_outer):
        xi = generate_noise(model, n, seed + r)
        f0 = cls.project(fstar + xi, tol)
        rng = np.random.default_rng(derive_seed(seed, 41, r))
        w = 0.0
        if radius > 0:
            for _ in range(R_inner):
                f1 = cls.project(fstar + xi + _sphere(rng, n, radius), tol)
                w = max(w, move(f1, f0))
        worst[r] = w
    level = _clamp_level(np.exp(-config.c_2 * n * eps_star**2), R_outer)
    return RadiusEstimate(
        value=_order_stat(worst, level),
        se=_boot_se(worst, level, derive_seed(seed, 42)),
        level=level,
        samples=worst,
        constants={"M": config.M, "c_2": config.c_2, "eps_star": eps_star},
        note="finite perturbations per noise draw over-estimate robustness",
    )


def estimate_rho_O(
    family: FunctionClass,
    sampler: PopulationSampler,
    fstar_rule: Callable[[np.ndarray], np.ndarray],
    model: NoiseModel,
    config: StabilityConfig,
    eps_star: float,
    R: int,
    seed: int,
    n: int,
    m: int = 2048,
    tol: float = DEFAULT_TOL,
) -> RadiusEstimate:
    """Quantile of the population diameter of the ``M' eps_star^2`` near-minimizer set."""
    if R < 100:
        raise ValueError("R must be >= 100")
    if not family.evaluable:
        raise EvaluationUnavailable(f"{family.kind} cannot be evaluated off the design")
    delta = config.M_prime * eps_star**2
    Z = sampler.sample(m, derive_seed(seed, 50))
    diams = np.zeros(R)
    for r in range(R):
        X = sampler.design(n, derive_seed(seed, 51, r))
        cls = family.with_design(X)
        f0 = np.asarray(fstar_rule(X.points), dtype=float)
        sol = solve_erm(cls, f0, generate_noise(model, n, seed + r), tol, probes=False)
        probe = o_delta_probe(cls, sol, delta, config.probe_directions, derive_seed(seed, 52, r))
        vals = cls.evaluate_many(probe.points, Z)
        diams[r] = _max_pairwise(vals)
    level = _clamp_level(2.0 * np.exp(-config.c_I * n * eps_star**2), R)
    q = _order_stat(diams, level)
    return RadiusEstimate(
        value=q * q,
        se=2.0 * q * _boot_se(diams, level, derive_seed(seed, 53)),
        level=level,
        samples=diams,
        constants={"M_prime": config.M_prime, "c_I": config.c_I, "eps_star": eps_star},
    )


# -- flipped noise --------------------------------------------------------------------
@dataclass
class JaggedSummary:
    d: np.ndarray
    e: np.ndarray
    d_quantiles: dict
    e_quantiles: dict
    exceed_fraction: Optional[float]
    C: float
    ks_statistic: float
    ks_pvalue: float
    ks_critical_1pct: float

    def to_dict(self, per_replicate: bool = False):
        out = {
            "d_quantiles": self.d_quantiles,
            "e_quantiles": self.e_quantiles,
            "exceed_fraction": self.exceed_fraction,
            "C": self.C,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "ks_critical_1pct": self.ks_critical_1pct,
            "min_e": float(self.e.min()),
        }
        if per_replicate:
            out["d"] = self.d.tolist()
            out["e"] = self.e.tolist()
        return out


_QS = (0.1, 0.25, 0.5, 0.75, 0.9)


def jagged_probe(cls: FunctionClass, fstar, model: NoiseModel, R: int, seed: int,
                 C: float = 1.0, eps_star: Optional[float] = None,
                 tol: float = DEFAULT_TOL) -> JaggedSummary:
    """Fits under noise and flipped noise, and the excess loss of the flipped fit.

    The symmetry check compares the error norms of unflipped fits on the first
    half of the replicates with those of flipped fits on the second half.
    """
    if not getattr(model, "symmetric", False):
        raise AsymmetricNoise("the flipped-noise probe needs noise symmetric under negation")
    if R < 2:
        raise ValueError("R must be >= 2")
    fstar = np.asarray(fstar, dtype=float)
    d = np.empty(R)
    e = np.empty(R)
    err_pos = np.empty(R)
    err_neg = np.empty(R)
    for r in range(R):
        xi = generate_noise(model, cls.n, seed + r)
        y = fstar + xi
        fp = cls.project(y, tol)
        fm = cls.project(fstar - xi, tol)
        diff = fp - fm
        d[r] = np.sqrt(np.mean(diff * diff))
        e[r] = empirical_loss(fm, y) - empirical_loss(fp, y)
        err_pos[r] = np.sqrt(np.mean((fp - fstar) ** 2))
        err_neg[r] = np.sqrt(np.mean((fm - fstar) ** 2))
    h = R // 2
    ks = ks_2samp(err_pos[:h], err_neg[h:2 * h])
    crit = 1.628 * np.sqrt(2.0 / h)
    exceed = None
    if eps_star is not None:
        exceed = float(np.mean(e >= C * eps_star**2))
    return JaggedSummary(
        d=d, e=e,
        d_quantiles={str(q): float(np.quantile(d, q)) for q in _QS},
        e_quantiles={str(q): float(np.quantile(e, q)) for q in _QS},
        exceed_fraction=exceed, C=C,
        ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue),
        ks_critical_1pct=float(crit),
    )


# -- fixed point -------------------------------------------------------------------
@dataclass
class FixedPointResult:
    fstar: np.ndarray
    residual: float
    iterations: int
    report: DecompositionReport
    success: bool
    history: list = field(default_factory=list)
    risk_constant: Optional[float] = None  # risk / eps_star^2 when eps_star is known

    def to_dict(self):
        return {
            "fstar": self.fstar.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "bias_sq": self.report.bias_sq,
            "variance": self.report.variance,
            "se_bias_sq": self.report.se["bias_sq"],
            "success": self.success,
            "history": list(self.history),
            "risk_constant": self.risk_constant,
            "report": self.report.to_dict(),
        }


def _start_point(cls: FunctionClass, tol):
    bb = cls.bounding_box()
    if bb is None:
        raise ValueError("the fixed-point search needs a bounded class")
    return cls.project(0.5 * (bb[0] + bb[1]), tol)


def fixed_point_search(
    cls: FunctionClass,
    model: NoiseModel,
    R_inner: int = 2000,
    max_iter: int = 50,
    tol_fp: float = 1e-2,
    seed: int = 0,
    start=None,
    R_decomp: int = 2000,
    eps_star: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> FixedPointResult:
    """Iterate ``f <- P(mean of fits at f + noise)`` until the step is below ``tol_fp``.

    Iteration ``k`` uses noise seeds from its own derived block. On success
    the decomposition is run at the limit and weak admissibility is judged by
    ``bias_sq <= 0.1 variance + 3 SE``.
    """
    if R_inner < 500:
        raise ValueError("R_inner must be >= 500")
    f = _start_point(cls, tol) if start is None else cls.project(np.asarray(start, dtype=float), tol)
    history = []
    residual = np.inf
    for k in range(1, max_iter + 1):
        base = derive_seed(seed, 60, k)
        acc = np.zeros(cls.n)
        for j in range(R_inner):
            acc += cls.project(f + generate_noise(model, cls.n, base + j), tol)
        nxt = cls.project(acc / R_inner, tol)
        residual = float(np.sqrt(np.mean((nxt - f) ** 2)))
        history.append(residual)
        f = nxt
        if residual <= tol_fp:
            report = fixed_design_decomposition(cls, f, model, R_decomp, derive_seed(seed, 61), tol)
            success = report.bias_sq <= 0.1 * report.variance + 3.0 * report.se["bias_sq"]
            const = report.risk / eps_star**2 if eps_star else None
            return FixedPointResult(f, residual, k, report, bool(success), history, const)
    raise NoConvergence(max_iter, residual)
