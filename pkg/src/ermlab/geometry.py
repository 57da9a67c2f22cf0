"""Metric entropy, balancing points, isometry remainders and interpolator diameters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .classes import AffineSubspace, FunctionClass
from .design import DesignSet, PopulationSampler, derive_seed
from .errors import EvaluationUnavailable, InterpolatorSamplingUnavailable, NoCrossing
from .sampling import sample_members

EPS_TOL = 1e-6


# -- entropy curves -------------------------------------------------------------
class EntropyCurve:
    """``eps -> log N(eps)``, analytic or built from net sizes on a grid."""

    def __init__(self, fn: Callable[[float], float], source: str, params: dict,
                 domain=(1e-12, np.inf)):
        self._fn = fn
        self.source = source
        self.params = params
        self.domain = domain

    def __call__(self, eps: float) -> float:
        return float(self._fn(float(eps)))

    @classmethod
    def power(cls, exponent: float = 1.0, scale: float = 1.0) -> "EntropyCurve":
        """``scale * eps**(-exponent)``."""
        return cls(lambda e: scale * e ** (-exponent), "analytic",
                   {"form": "power", "exponent": exponent, "scale": scale})

    @classmethod
    def log(cls, scale: float = 1.0) -> "EntropyCurve":
        """``scale * ln(1/eps)``, floored at zero (parametric classes)."""
        return cls(lambda e: max(0.0, scale * np.log(1.0 / e)), "analytic",
                   {"form": "log", "scale": scale}, domain=(1e-12, 1.0))

    @classmethod
    def zero(cls) -> "EntropyCurve":
        return cls(lambda e: 0.0, "analytic", {"form": "zero"})

    @classmethod
    def empirical(cls, eps, log_counts) -> "EntropyCurve":
        """Piecewise-linear curve through grid values after monotone regularization.

        Values are replaced by their running max toward small eps so the curve
        is nonincreasing; outside the grid it is held constant.
        """
        eps = np.asarray(eps, dtype=float)
        vals = np.asarray(log_counts, dtype=float)
        order = np.argsort(eps)
        eps, vals = eps[order], vals[order]
        vals = np.maximum.accumulate(vals[::-1])[::-1]
        vals = np.maximum(vals, 0.0)
        curve = cls(lambda e: float(np.interp(e, eps, vals)), "empirical",
                    {"eps": eps.tolist(), "log_count": vals.tolist()},
                    domain=(float(eps[0]), float(eps[-1])))
        curve.grid = (eps, vals)
        return curve

    def to_dict(self):
        return {"source": self.source, **self.params}

    def to_rows(self):
        if self.source != "empirical":
            raise ValueError("only empirical curves have a table form")
        eps, vals = self.grid
        return [[float(e), float(v)] for e, v in zip(eps, vals)]


def _bisect_crossing(g: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    """Root of a nonincreasing g on [lo, hi] by bisection in log space."""
    glo, ghi = g(lo), g(hi)
    if glo < 0 or ghi > 0:
        raise NoCrossing("the curve does not cross the balancing line on the search interval")
    if glo == 0:
        return lo
    for _ in range(400):
        if hi - lo <= tol * min(1.0, hi):
            break
        mid = np.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    # return the endpoint with the smaller imbalance
    return lo if abs(g(lo)) <= abs(g(hi)) else hi


def _search_interval(curve, lo, hi):
    lo = max(lo, curve.domain[0]) if lo is None else lo
    if hi is None:
        hi = curve.domain[1] if np.isfinite(curve.domain[1]) else 1e3
    return lo, hi


def solve_balancing(curve: EntropyCurve, n: int, c: float = 1.0,
                    lo: Optional[float] = None, hi: Optional[float] = None,
                    tol: float = EPS_TOL) -> float:
    """Crossing point of ``log N(eps)`` and ``c n eps^2``."""
    if n < 1 or c <= 0:
        raise ValueError("n >= 1 and c > 0 are required")
    lo, hi = _search_interval(curve, 1e-12 if lo is None else lo, hi)
    g = lambda e: curve(e) - c * n * e * e  # noqa: E731
    return _bisect_crossing(g, lo, hi, tol)


@dataclass(frozen=True)
class EpsilonU:
    eps_star: float
    eps_tilde: float
    eps_U: float
    eps_V: float
    I_U: float
    I_L: float

    def to_dict(self):
        return dict(self.__dict__)


def solve_epsilon_U(curve: EntropyCurve, n: int, I_U: float, I_L: float = 0.0,
                    c: float = 1.0, eps_star: Optional[float] = None,
                    lo: Optional[float] = None, hi: Optional[float] = None,
                    tol: float = EPS_TOL) -> EpsilonU:
    """Quartic balancing ``I_U log N(eps) = c n eps^4`` and the derived radii."""
    if I_U < 0 or I_L < 0:
        raise ValueError("isometry remainders must be nonnegative")
    if eps_star is None:
        eps_star = solve_balancing(curve, n, c, lo, hi, tol)
    if I_U == 0:
        eps_tilde = 0.0
    else:
        lo_, hi_ = _search_interval(curve, 1e-12 if lo is None else lo, hi)
        g = lambda e: I_U * curve(e) - c * n * e**4  # noqa: E731
        if g(lo_) <= 0:
            # crossing below the search floor; it cannot exceed eps_star
            eps_tilde = lo_
        else:
            eps_tilde = _bisect_crossing(g, lo_, hi_, tol)
    eps_U = max(eps_star, eps_tilde)
    eps_V = float(np.sqrt(max(eps_U**2, I_L)))
    return EpsilonU(eps_star, eps_tilde, eps_U, eps_V, float(I_U), float(I_L))


# -- nets -----------------------------------------------------------------------
def greedy_net_from_pool(pool: np.ndarray, epsilon: float) -> np.ndarray:
    """Indices of farthest-point centers covering ``pool`` at radius ``epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    pool = np.atleast_2d(pool)
    n = pool.shape[1]
    diff = pool - pool[0]
    mind = np.sqrt((diff * diff).sum(axis=1) / n)
    centers = [0]
    while True:
        far = int(np.argmax(mind))
        if mind[far] <= epsilon:
            break
        centers.append(far)
        diff = pool - pool[far]
        mind = np.minimum(mind, np.sqrt((diff * diff).sum(axis=1) / n))
    return np.array(centers)


def member_pool(cls: FunctionClass, pool_size: int, seed: int, method: str = "auto",
                box=None) -> np.ndarray:
    return sample_members(cls, pool_size, seed, method=method, box=box)


def greedy_net(cls: FunctionClass, epsilon: float, pool_size: int, seed: int,
               pool: Optional[np.ndarray] = None, method: str = "auto") -> np.ndarray:
    """Centers (rows) of an epsilon-net of a sampled pool, in the empirical norm.

    Centers are pairwise more than epsilon apart, so they also form a packing.
    """
    if pool is None:
        pool = member_pool(cls, pool_size, seed, method)
    return np.atleast_2d(pool)[greedy_net_from_pool(pool, epsilon)]


def empirical_entropy_curve(cls: FunctionClass, eps_grid: Sequence[float], pool_size: int,
                            seed: int, method: str = "auto") -> EntropyCurve:
    pool = member_pool(cls, pool_size, seed, method)
    counts = [len(greedy_net_from_pool(pool, e)) for e in eps_grid]
    return EntropyCurve.empirical(eps_grid, np.log(counts))


# -- isometry remainders ----------------------------------------------------------
@dataclass
class IsometryEstimate:
    I_L: float
    I_U: float
    per_design_L: np.ndarray
    per_design_U: np.ndarray
    level: float
    pair_count: int
    lower_bound: bool = True  # maximization over sampled pairs only

    def to_dict(self):
        return {
            "I_L": self.I_L,
            "I_U": self.I_U,
            "per_design_L": self.per_design_L.tolist(),
            "per_design_U": self.per_design_U.tolist(),
            "level": self.level,
            "pair_count": self.pair_count,
            "estimate_is_lower_bound": self.lower_bound,
        }


def sample_pairs(pool_size: int, count: int, seed: int) -> np.ndarray:
    """``count`` index pairs i < j; a prefix of a longer draw with the same seed."""
    if pool_size < 2:
        raise ValueError("need at least two pool members")
    rng = np.random.default_rng(seed)
    i = rng.integers(0, pool_size, size=count)
    j = rng.integers(0, pool_size - 1, size=count)
    j = j + (j >= i)
    return np.stack([np.minimum(i, j), np.maximum(i, j)], axis=1)


def _sq_dists(V: np.ndarray) -> np.ndarray:
    """Mean squared differences between all rows of V."""
    c = V - V.mean(axis=0)
    sq = (c * c).sum(axis=1)
    G = sq[:, None] + sq[None, :] - 2.0 * (c @ c.T)
    return np.maximum(G, 0.0) / V.shape[1]


def design_remainders(emp_vals: np.ndarray, pop_vals: np.ndarray, pairs: np.ndarray):
    """Largest lower/upper isometry deficits over the given pairs for one design.

    ``emp_vals`` (P, n) are pool members at the design, ``pop_vals`` (P, m) the
    same members at fresh covariates.
    """
    P = emp_vals.shape[0]
    if len(pairs) * 4 > P * P:
        # dense pair sets: all squared distances through Gram matrices
        emp = _sq_dists(emp_vals)[pairs[:, 0], pairs[:, 1]]
        pop = _sq_dists(pop_vals)[pairs[:, 0], pairs[:, 1]]
    else:
        de = emp_vals[pairs[:, 0]] - emp_vals[pairs[:, 1]]
        dp = pop_vals[pairs[:, 0]] - pop_vals[pairs[:, 1]]
        emp = (de * de).mean(axis=1)
        pop = (dp * dp).mean(axis=1)
    lower = max(0.0, float(np.max(0.5 * pop - emp)))
    upper = max(0.0, float(np.max(0.5 * emp - pop)))
    return lower, upper


def isometry_remainders(
    family: FunctionClass,
    sampler: PopulationSampler,
    n: int,
    pair_count: int,
    design_replicates: int,
    seed: int,
    pool_size: int = 128,
    m: int = 2048,
    method: str = "auto",
    box=None,
) -> IsometryEstimate:
    """Sampled-pair estimates of the lower and upper isometry remainders.

    Per design, a pool of members is drawn at the design, extended off the
    design by the class's extension rule and compared on ``m`` fresh covariates.
    The reported values are the (1 - 1/n) quantiles over designs.
    ``box`` bounds the pool for classes without a bounding box.
    """
    if pair_count < 1:
        raise ValueError("pair_count must be >= 1")
    if design_replicates < n:
        raise ValueError("design_replicates must be >= n")
    if not family.evaluable:
        raise EvaluationUnavailable(f"{family.kind} cannot be evaluated off the design")
    lows = np.empty(design_replicates)
    ups = np.empty(design_replicates)
    for r in range(design_replicates):
        X = sampler.design(n, derive_seed(seed, 10, r))
        cls = family.with_design(X)
        pool = sample_members(cls, pool_size, derive_seed(seed, 11, r), method=method, box=box)
        Z = sampler.sample(m, derive_seed(seed, 12, r))
        pop = cls.evaluate_many(pool, Z)
        pairs = sample_pairs(pool_size, pair_count, derive_seed(seed, 13, r))
        lows[r], ups[r] = design_remainders(pool, pop, pairs)
    level = 1.0 - 1.0 / n
    return IsometryEstimate(
        I_L=float(np.quantile(lows, level, method="linear")),
        I_U=float(np.quantile(ups, level, method="linear")),
        per_design_L=lows,
        per_design_U=ups,
        level=level,
        pair_count=pair_count,
    )


# -- generalization diameter ------------------------------------------------------
_ZERO_FLOOR = 1e-9


def _affine_determined(cls: FunctionClass) -> bool:
    """Unbounded affine class whose design rows pin every coefficient."""
    if not isinstance(cls, AffineSubspace) or cls.bounds is not None:
        return False
    return np.linalg.matrix_rank(cls.B) == cls.B.shape[1]


def generalization_diameter(
    family: FunctionClass,
    sampler: PopulationSampler,
    fstar,
    n: int,
    seed: int,
    design: Optional[DesignSet] = None,
    m: int = 512,
    directions: int = 16,
) -> float:
    """Lower bound on the L2(P) diameter of members agreeing with ``fstar`` on a design.

    A class on the design plus ``m`` fresh covariates is realized; linear
    programs push the fresh-covariate values of interpolating members in
    opposite directions, and the largest resulting pair distance is returned.
    ``fstar`` may be a callable on covariates or a vector of design values.
    """
    X = design if design is not None else sampler.design(n, derive_seed(seed, 20))
    Z = sampler.sample(m, derive_seed(seed, 21))
    try:
        cls_x = family.with_design(X)
    except EvaluationUnavailable as exc:
        raise InterpolatorSamplingUnavailable(str(exc)) from exc
    target = np.asarray(fstar(X.points) if callable(fstar) else fstar, dtype=float)
    if target.shape != (X.n,):
        raise ValueError("fstar must give one value per design point")
    if _affine_determined(cls_x):
        return 0.0
    U = X.concat(DesignSet(Z, metric=X.metric))
    cls_u = family.with_design(U)
    form = cls_u.polyhedral_form()
    if form is None:
        raise InterpolatorSamplingUnavailable(f"{family.kind} has no polyhedral form")
    A, b, offset, B = form
    N = U.n
    offset = np.zeros(N) if offset is None else offset
    B = np.eye(N) if B is None else B
    Bx, Bz = B[: X.n], B[X.n:]
    A_ub = sparse.csr_matrix(A) if A.shape[0] else None
    b_ub = b if A.shape[0] else None
    A_eq = sparse.csr_matrix(Bx)
    rng = np.random.default_rng(derive_seed(seed, 22))
    dirs = [np.ones(m)] + [rng.standard_normal(m) for _ in range(max(0, directions - 1))]
    best = 0.0
    for w in dirs:
        vals = []
        for sgn in (1.0, -1.0):
            res = linprog(
                -sgn * (Bz.T @ w),
                A_ub=A_ub,
                b_ub=b_ub,
                A_eq=A_eq,
                b_eq=target - offset[: X.n],
                bounds=(None, None),
                method="highs",
            )
            if res.status == 3:
                return float("inf")
            if res.status != 0:
                raise ValueError(f"no member interpolates fstar ({res.message})")
            vals.append(offset[X.n:] + Bz @ res.x)
        d = float(np.sqrt(np.mean((vals[0] - vals[1]) ** 2)))
        best = max(best, d)
    return 0.0 if best < _ZERO_FLOOR else best


# -- report -----------------------------------------------------------------------
@dataclass
class GeometryReport:
    n: int
    eps_star: float
    eps_U: float
    eps_V: float
    I_L: float
    I_U: float
    curve: EntropyCurve
    confidence: float
    balancing_c: float = 1.0
    flags: list = field(default_factory=lambda: ["estimate_is_lower_bound"])

    def to_dict(self):
        return {
            "n": self.n,
            "eps_star": self.eps_star,
            "eps_U": self.eps_U,
            "eps_V": self.eps_V,
            "I_L": self.I_L,
            "I_U": self.I_U,
            "curve": self.curve.to_dict(),
            "confidence": self.confidence,
            "balancing_c": self.balancing_c,
            "flags": list(self.flags),
        }


def geometry_report(curve: EntropyCurve, n: int, I_L: float = 0.0, I_U: float = 0.0,
                    c: float = 1.0) -> GeometryReport:
    eu = solve_epsilon_U(curve, n, I_U, I_L, c)
    return GeometryReport(n=n, eps_star=eu.eps_star, eps_U=eu.eps_U, eps_V=eu.eps_V,
                          I_L=I_L, I_U=I_U, curve=curve, confidence=1.0 - 1.0 / n,
                          balancing_c=c)
