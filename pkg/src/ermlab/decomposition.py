"""Monte Carlo risk, bias and variance estimates in fixed and random design."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .classes import DEFAULT_TOL, FunctionClass
from .design import DesignSet, PopulationSampler, derive_seed
from .erm import NoiseModel, generate_noise
from .errors import ErmLabError, EvaluationUnavailable, SolverFailure
from .parallel import chunks, ordered_map

FIELDS = ("risk", "variance", "bias_sq", "cond_var", "var_cond_mean")
FAILURE_THRESHOLD = 0.01
BOOTSTRAP = 200


@dataclass
class DecompositionReport:
    n: int
    risk: float
    variance: float
    bias_sq: float
    cond_var: float
    var_cond_mean: float
    se: dict
    replicates: Tuple[int, int]
    norm_used: str
    failures: int = 0
    seed: Optional[int] = None
    tol: float = DEFAULT_TOL
    class_kind: str = ""
    flags: List[str] = field(default_factory=list)

    def risk_gap(self) -> Tuple[float, float]:
        """(risk - variance - bias_sq, combined standard error)."""
        gap = self.risk - self.variance - self.bias_sq
        se = np.sqrt(self.se["risk"] ** 2 + self.se["variance"] ** 2 + self.se["bias_sq"] ** 2)
        return float(gap), float(se)

    def total_variance_gap(self) -> Tuple[float, float]:
        """(variance - cond_var - var_cond_mean, combined standard error)."""
        gap = self.variance - self.cond_var - self.var_cond_mean
        se = np.sqrt(self.se["variance"] ** 2 + self.se["cond_var"] ** 2
                     + self.se["var_cond_mean"] ** 2)
        return float(gap), float(se)

    def identities_hold(self, k: float = 3.0, floor: float = 1e-12) -> bool:
        g1, s1 = self.risk_gap()
        g2, s2 = self.total_variance_gap()
        return abs(g1) <= k * s1 + floor and abs(g2) <= k * s2 + floor

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            **{f: getattr(self, f) for f in FIELDS},
            "se": dict(self.se),
            "replicates": list(self.replicates),
            "norm_used": self.norm_used,
            "failures": self.failures,
            "seed": self.seed,
            "tol": self.tol,
            "class_kind": self.class_kind,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecompositionReport":
        return cls(
            n=d["n"], **{f: d[f] for f in FIELDS}, se=dict(d["se"]),
            replicates=tuple(d["replicates"]), norm_used=d["norm_used"],
            failures=d.get("failures", 0), seed=d.get("seed"), tol=d.get("tol", DEFAULT_TOL),
            class_kind=d.get("class_kind", ""), flags=list(d.get("flags", [])),
        )


def _flags(cls: FunctionClass) -> List[str]:
    return [] if cls.diameter_bounded else ["diameter_unbounded"]


def _check_failures(failed: int, total: int):
    if failed > FAILURE_THRESHOLD * total:
        raise SolverFailure(failed, total, FAILURE_THRESHOLD)


# -- fixed design -----------------------------------------------------------
def _fixed_chunk(cls, y0, model, seed, tol, idx):
    out = np.full((len(idx), cls.n), np.nan)
    for k, r in enumerate(idx):
        xi = generate_noise(model, cls.n, seed + r)
        try:
            out[k] = cls.project(y0 + xi, tol)
        except ErmLabError:
            pass
    return out


def fixed_design_fits(cls, fstar, model, R, seed, tol=DEFAULT_TOL, workers=1) -> np.ndarray:
    """(R, n) array of fits; row r uses noise seed ``seed + r``; failed rows are NaN."""
    fstar = np.asarray(fstar, dtype=float)
    fn = partial(_fixed_chunk, cls, fstar, model, seed, tol)
    parts = chunks(R, workers if workers > 1 else 1)
    return np.vstack(ordered_map(fn, parts, workers))


def summarize_fixed(F: np.ndarray, fstar: np.ndarray):
    """Estimates and delta-method standard errors from a stack of fits."""
    R, n = F.shape
    base = F[0]
    dev = F - base
    mean = base + dev.mean(axis=0)
    resid = F - mean
    s = (resid * resid).mean(axis=1) * (R / (R - 1))  # per-replicate variance terms
    variance = float(s.mean())
    err = F - fstar
    losses = (err * err).mean(axis=1)
    risk = float(losses.mean())
    b = mean - fstar
    bias_sq = float(b @ b / n)
    lin = resid @ b / n
    se_bias = np.sqrt(4.0 * lin.var(ddof=1) / R + 2.0 * (variance / R) ** 2)
    sd = lambda a: float(a.std(ddof=1) / np.sqrt(R))  # noqa: E731
    return {
        "risk": risk,
        "variance": variance,
        "bias_sq": bias_sq,
        "se_risk": sd(losses),
        "se_variance": sd(s),
        "se_bias_sq": float(se_bias),
        "mean": mean,
    }


def fixed_design_decomposition(
    cls: FunctionClass,
    fstar,
    model: NoiseModel,
    R: int = 2000,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> DecompositionReport:
    """Risk, variance and squared bias of the least-squares fit in the empirical norm."""
    if R < 2:
        raise ValueError("R must be >= 2")
    fstar = np.asarray(fstar, dtype=float)
    if fstar.shape != (cls.n,):
        raise ValueError("fstar must have one value per design point")
    F = fixed_design_fits(cls, fstar, model, R, seed, tol, workers)
    ok = ~np.isnan(F).any(axis=1)
    failed = int(R - ok.sum())
    _check_failures(failed, R)
    est = summarize_fixed(F[ok], fstar)
    se = {
        "risk": est["se_risk"],
        "variance": est["se_variance"],
        "bias_sq": est["se_bias_sq"],
        "cond_var": est["se_variance"],
        "var_cond_mean": 0.0,
    }
    # in fixed design the only randomness is the noise: E V(.|X) = V, V(E(.|X)) = 0
    return DecompositionReport(
        n=cls.n, risk=est["risk"], variance=est["variance"], bias_sq=est["bias_sq"],
        cond_var=est["variance"], var_cond_mean=0.0, se=se, replicates=(1, int(ok.sum())),
        norm_used="empirical", failures=failed, seed=seed, tol=tol,
        class_kind=cls.kind, flags=_flags(cls),
    )


# -- random design ----------------------------------------------------------
def _outer_replicate(family, sampler, fstar_rule, model, n, R_xi, seed, tol, Z, fz, r):
    X = sampler.design(n, derive_seed(seed, 1, r))
    cls = family.with_design(X)
    f0 = np.asarray(fstar_rule(X.points), dtype=float)
    G = np.full((R_xi, Z.shape[0]), np.nan)
    fails = 0
    for j in range(R_xi):
        xi = generate_noise(model, n, seed + r * R_xi + j)
        try:
            fhat = cls.project(f0 + xi, tol)
            G[j] = cls.extend(fhat)(Z)
        except EvaluationUnavailable:
            raise
        except ErmLabError:
            fails += 1
    ok = ~np.isnan(G).any(axis=1)
    G = G[ok]
    k = G.shape[0]
    gbar = G.mean(axis=0)
    ss = float(((G - gbar) ** 2).mean(axis=1).sum())
    err = G - fz
    risk_sum = float((err * err).mean(axis=1).sum())
    return gbar, ss, risk_sum, k, fails


def _outer_chunk(args, idx):
    return [_outer_replicate(*args, r) for r in idx]


def _random_stats(gbar, ss, risk_sum, k, fz):
    """Estimates from per-design summaries (works on bootstrap resamples too)."""
    N = k.sum()
    RX = len(k)
    w = ss / np.maximum(k - 1, 1)  # corrected inner variances
    cond_var = float(np.mean(w))
    grand = (k[:, None] * gbar).sum(axis=0) / N
    dev = gbar - grand
    between = (dev * dev).mean(axis=1)
    s2 = float(between.sum() / (RX - 1))
    kbar = float(np.mean(k))
    var_cond_mean = max(0.0, s2 - cond_var / kbar)
    total = float((ss.sum() + (k * between).sum()) / (N - 1))
    risk = float(risk_sum.sum() / N)
    b = grand - fz
    bias_sq = float(np.mean(b * b))
    return np.array([risk, total, bias_sq, cond_var, var_cond_mean])


def random_design_decomposition(
    family: FunctionClass,
    sampler: PopulationSampler,
    fstar_rule: Callable[[np.ndarray], np.ndarray],
    model: NoiseModel,
    n: int,
    R_X: int = 200,
    R_xi: int = 100,
    m: int = 4096,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
    bootstrap: int = BOOTSTRAP,
) -> DecompositionReport:
    """Nested Monte Carlo (designs outside, noise inside) in the population norm.

    ``family`` is any evaluable class; it is rebuilt on each sampled design.
    One batch of ``m`` fresh covariates is shared by every evaluation of the run.
    """
    if R_X < 2 or R_xi < 2:
        raise ValueError("R_X and R_xi must be >= 2")
    if not family.evaluable:
        raise EvaluationUnavailable(f"{family.kind} cannot be evaluated off the design")
    Z = sampler.sample(m, derive_seed(seed, 2))
    fz = np.asarray(fstar_rule(Z), dtype=float)
    args = (family, sampler, fstar_rule, model, n, R_xi, seed, tol, Z, fz)
    parts = chunks(R_X, workers if workers > 1 else 1)
    rows = [row for part in ordered_map(partial(_outer_chunk, args), parts, workers) for row in part]
    gbar = np.array([r[0] for r in rows])
    ss = np.array([r[1] for r in rows])
    risk_sum = np.array([r[2] for r in rows])
    k = np.array([r[3] for r in rows], dtype=float)
    fails = int(sum(r[4] for r in rows))
    _check_failures(fails, R_X * R_xi)
    if np.any(k < 2):
        raise SolverFailure(fails, R_X * R_xi, FAILURE_THRESHOLD)
    est = _random_stats(gbar, ss, risk_sum, k, fz)
    rng = np.random.default_rng(derive_seed(seed, 3))
    boot = np.empty((bootstrap, len(FIELDS)))
    for b in range(bootstrap):
        idx = rng.integers(0, R_X, size=R_X)
        boot[b] = _random_stats(gbar[idx], ss[idx], risk_sum[idx], k[idx], fz)
    se = dict(zip(FIELDS, (float(v) for v in boot.std(axis=0, ddof=1))))
    return DecompositionReport(
        n=n, **dict(zip(FIELDS, (float(v) for v in est))), se=se,
        replicates=(R_X, R_xi), norm_used=f"population({m})", failures=fails,
        seed=seed, tol=tol, class_kind=family.kind, flags=_flags(family),
    )


# -- rate scans ---------------------------------------------------------------
def rate_scan(
    make_class: Callable[[int], FunctionClass],
    n_grid: Sequence[int],
    fstar_rule: Callable[[FunctionClass], np.ndarray],
    model: NoiseModel,
    R: int = 2000,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    workers: int = 1,
) -> List[Tuple[int, DecompositionReport]]:
    """Fixed-design decomposition at each n; every n uses the same base seed."""
    grid = [int(v) for v in n_grid]
    if len(grid) < 4:
        raise ValueError("n_grid needs at least 4 values")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_grid must be strictly increasing")
    out = []
    for n in grid:
        cls = make_class(n)
        fstar = np.asarray(fstar_rule(cls), dtype=float)
        out.append((n, fixed_design_decomposition(cls, fstar, model, R, seed, tol, workers)))
    return out


SCAN_COLUMNS = ("n",) + FIELDS + tuple(f"se_{f}" for f in FIELDS)


def scan_rows(scan) -> List[list]:
    return [[n] + [getattr(rep, f) for f in FIELDS] + [rep.se[f] for f in FIELDS]
            for n, rep in scan]


def grid_design(n: int) -> DesignSet:
    return DesignSet.grid(n)
