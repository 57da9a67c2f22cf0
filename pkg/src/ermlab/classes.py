"""Convex function classes realized as projectable convex bodies at a design.

Every class knows its sample count ``n`` and offers ``project`` (Euclidean
projection in R^n, which is also the projection in the empirical norm),
``violation`` (max constraint violation, zero exactly on members) and, where
the class is a genuine class of functions on a covariate space, an extension
rule that evaluates a member off the design.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .design import DesignSet
from .errors import DimensionMismatch, EvaluationUnavailable
from .solvers import PolyhedralProjector, dykstra, pava, project_ball, project_halfspace

DEFAULT_TOL = 1e-8
# Dykstra stops on a sweep-to-sweep change this much tighter than the caller's tol.
_DYKSTRA_TIGHTEN = 1e-2

_KINDS = (
    "AffineSubspace",
    "Ball",
    "Box",
    "HalfSpace",
    "IsotonicCone",
    "ConvexRegression1D",
    "LipschitzBall",
    "BallRestriction",
)


def _as_vector(v, n, what="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != n:
        raise DimensionMismatch(n, v.shape[0] if v.ndim == 1 else v.shape, what)
    return v


def _as_design(design) -> Optional[DesignSet]:
    if design is None or isinstance(design, DesignSet):
        return design
    return DesignSet(design)


class _Ties:
    """Groups identical design points; members must agree within a group."""

    def __init__(self, design: DesignSet):
        uniq, inv, counts = np.unique(
            design.points, axis=0, return_inverse=True, return_counts=True
        )
        self.unique = uniq
        self.inverse = inv.ravel()
        self.weights = counts.astype(float)
        self.n = design.n
        self.m = uniq.shape[0]
        self.trivial = self.m == self.n and np.all(self.inverse == np.arange(self.n))

    def merge(self, y):
        return np.bincount(self.inverse, weights=y, minlength=self.m) / self.weights

    def expand(self, theta):
        return np.asarray(theta)[self.inverse]

    def expansion(self):
        E = np.zeros((self.n, self.m))
        E[np.arange(self.n), self.inverse] = 1.0
        return E

    def spread(self, v):
        """Largest within-group disagreement."""
        if self.m == self.n:
            return 0.0
        hi = np.full(self.m, -np.inf)
        lo = np.full(self.m, np.inf)
        np.maximum.at(hi, self.inverse, v)
        np.minimum.at(lo, self.inverse, v)
        return float(np.max(hi - lo))

    def frame(self):
        if self.m == self.n:
            return None
        return self.expansion() / np.sqrt(self.weights)


def _bounds_pair(bounds):
    if bounds is None:
        return None
    if np.isscalar(bounds):
        g = float(bounds)
        return (-g, g)
    lo, hi = bounds
    lo, hi = float(lo), float(hi)
    if lo > hi:
        raise ValueError("lower bound exceeds upper bound")
    return (lo, hi)


def _box_violation(v, bounds):
    if bounds is None:
        return 0.0
    lo, hi = bounds
    return float(max(0.0, np.max(v - hi), np.max(lo - v)))


class Extension:
    """A class member viewed as a function on the covariate space."""

    def __init__(self, rule: Callable[[np.ndarray], np.ndarray], values: np.ndarray):
        self._rule = rule
        self.values = values

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        return self._rule(pts)


class FunctionClass:
    kind = "FunctionClass"
    diameter_bounded = True

    def __init__(self, n: int, design: Optional[DesignSet] = None):
        if n < 1:
            raise ValueError("n must be >= 1")
        if design is not None and design.n != n:
            raise DimensionMismatch(n, design.n, "design")
        self._n = int(n)
        self.design = design

    @property
    def n(self) -> int:
        return self._n

    # -- core contract -------------------------------------------------
    def project(self, y, tol: float = DEFAULT_TOL) -> np.ndarray:
        if tol <= 0:
            raise ValueError("tol must be positive")
        return self._project(_as_vector(y, self.n, "target"), tol)

    def violation(self, v) -> float:
        return self._violation(_as_vector(v, self.n))

    def contains(self, v, tol: float = DEFAULT_TOL) -> bool:
        return self.violation(v) <= tol

    def _project(self, y, tol):
        raise NotImplementedError

    def _violation(self, v):
        raise NotImplementedError

    # -- geometry helpers ------------------------------------------------
    def bounding_box(self):
        """``(lo, hi)`` arrays enclosing the class, or ``None`` if unbounded."""
        return None

    def frame(self):
        """Orthonormal basis (n x k) of the directions spanned by the class.

        ``None`` means the class is full-dimensional in R^n.
        """
        return None

    def polyhedral_form(self):
        """``(A, b, offset, B)`` with members ``offset + B theta``, ``A theta <= b``.

        ``None`` for non-polyhedral classes; ``offset``/``B`` of ``None`` mean
        zero and the identity.
        """
        return None

    def certificate(self, y, v) -> Optional[float]:
        """Exact optimality gap of ``v`` as the projection of ``y``, if available."""
        return None

    def direct_members(self, rng, count, lo, hi) -> Optional[np.ndarray]:
        """Members drawn without projection, or ``None`` if the kind has no such rule."""
        return None

    # -- function view ----------------------------------------------------
    @property
    def evaluable(self) -> bool:
        return False

    def extend(self, values) -> Extension:
        raise EvaluationUnavailable(f"{self.kind} is defined only at the design points")

    def evaluate(self, values, points) -> np.ndarray:
        return self.extend(values)(points)

    def evaluate_many(self, members, points) -> np.ndarray:
        """(count, m) values of several members at the same points."""
        return np.array([self.extend(v)(points) for v in np.atleast_2d(members)])

    def with_design(self, design) -> "FunctionClass":
        raise EvaluationUnavailable(f"{self.kind} cannot be rebuilt on a new design")

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.describe().items() if k != "kind")
        return f"{self.kind}({params})"


# ---------------------------------------------------------------------------
class AffineSubspace(FunctionClass):
    """``offset + span(basis)``, optionally intersected with a value box.

    ``basis`` is ``"constant"`` or ``"linear"`` (function classes on the design,
    evaluable off-design), ``"full"`` (all of R^n) or an explicit n x k matrix.
    A matrix with zero columns and an offset gives a singleton.
    """

    kind = "AffineSubspace"

    def __init__(self, design=None, basis="constant", offset=None, bounds=None, n=None):
        design = _as_design(design)
        if n is None:
            if design is None:
                if isinstance(basis, str):
                    raise ValueError("n or design is required")
                n = np.asarray(basis).shape[0]
            else:
                n = design.n
        super().__init__(n, design)
        self.basis_rule = basis if isinstance(basis, str) else "matrix"
        if isinstance(basis, str):
            if basis == "constant":
                B = np.ones((n, 1))
            elif basis == "linear":
                if design is None:
                    raise ValueError("the linear basis needs a design")
                B = np.hstack([np.ones((n, 1)), design.points])
            elif basis == "full":
                B = np.eye(n)
            else:
                raise ValueError(f"unknown basis {basis!r}")
        else:
            B = np.asarray(basis, dtype=float).reshape(n, -1)
        self.B = B
        self.offset = np.zeros(n) if offset is None else _as_vector(offset, n, "offset")
        self.bounds = _bounds_pair(bounds)
        if B.shape[1]:
            Q, R = np.linalg.qr(B)
            keep = np.abs(np.diag(R)) > 1e-10 * max(1.0, np.abs(R).max())
            if not np.all(keep):
                # rank-deficient basis: keep an orthonormal basis of its range
                U, s, _ = np.linalg.svd(B, full_matrices=False)
                Q = U[:, s > 1e-10 * s.max()]
            self.Q = Q
        else:
            self.Q = np.zeros((n, 0))
        self._poly = None
        if self.bounds is not None and self.dim > 0 and not self._is_constants:
            lo, hi = self.bounds
            A = np.vstack([self.Q, -self.Q])
            b = np.concatenate([hi - self.offset, self.offset - lo])
            self._poly = PolyhedralProjector(A, b, offset=self.offset, B=self.Q)
        if self.bounds is not None:
            lo, hi = self.bounds
            if self.dim == 0 and _box_violation(self.offset, self.bounds) > 0:
                raise ValueError("singleton offset lies outside the bounds")

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    @property
    def _is_constants(self):
        return self.dim == 1 and np.allclose(self.Q[:, 0], self.Q[0, 0]) and not np.any(self.offset)

    def _project(self, y, tol):
        if self.dim == 0:
            return self.offset.copy()
        if self._is_constants:
            c = float(np.mean(y))
            if self.bounds is not None:
                c = min(max(c, self.bounds[0]), self.bounds[1])
            return np.full(self.n, c)
        if self._poly is not None:
            return self._poly(y)
        r = y - self.offset
        return self.offset + self.Q @ (self.Q.T @ r)

    def _violation(self, v):
        r = v - self.offset
        resid = r - self.Q @ (self.Q.T @ r) if self.dim else r
        off = float(np.max(np.abs(resid))) if resid.size else 0.0
        return max(off, _box_violation(v, self.bounds))

    def bounding_box(self):
        if self.dim == 0:
            return self.offset.copy(), self.offset.copy()
        if self.bounds is not None:
            return np.full(self.n, self.bounds[0]), np.full(self.n, self.bounds[1])
        return None

    def frame(self):
        if self.dim == self.n:
            return None
        return self.Q

    def polyhedral_form(self):
        if self.bounds is None:
            return np.zeros((0, self.dim)), np.zeros(0), self.offset, self.Q
        lo, hi = self.bounds
        A = np.vstack([self.Q, -self.Q])
        b = np.concatenate([hi - self.offset, self.offset - lo])
        return A, b, self.offset, self.Q

    def certificate(self, y, v):
        if self.bounds is not None:
            return None
        y = _as_vector(y, self.n)
        v = _as_vector(v, self.n)
        ortho = float(np.max(np.abs(self.Q.T @ (y - v)))) / self.n if self.dim else 0.0
        return max(ortho, self._violation(v))

    @property
    def evaluable(self):
        return self.design is not None and self.basis_rule in ("constant", "linear") and not np.any(self.offset)

    def _basis_at(self, pts):
        if self.basis_rule == "constant":
            return np.ones((pts.shape[0], 1))
        return np.hstack([np.ones((pts.shape[0], 1)), pts])

    def extend(self, values):
        if not self.evaluable:
            return super().extend(values)
        values = _as_vector(values, self.n)
        coef, *_ = np.linalg.lstsq(self.B, values, rcond=None)
        bounds = self.bounds

        def rule(pts):
            out = self._basis_at(pts) @ coef
            return out if bounds is None else np.clip(out, *bounds)

        return Extension(rule, values)

    def with_design(self, design):
        if not self.evaluable:
            return super().with_design(design)
        return AffineSubspace(_as_design(design), basis=self.basis_rule, bounds=self.bounds)

    def describe(self):
        d = {"kind": self.kind, "n": self.n, "basis": self.basis_rule, "dim": self.dim}
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d


def constants(design_or_n, bounds=None) -> AffineSubspace:
    """The class of constant functions, optionally with values in ``bounds``."""
    if isinstance(design_or_n, (int, np.integer)):
        return AffineSubspace(None, "constant", bounds=bounds, n=int(design_or_n))
    return AffineSubspace(_as_design(design_or_n), "constant", bounds=bounds)


def full_space(n: int) -> AffineSubspace:
    return AffineSubspace(None, "full", n=n)


def singleton(point) -> AffineSubspace:
    point = np.asarray(point, dtype=float)
    return AffineSubspace(None, np.zeros((point.size, 0)), offset=point, n=point.size)


# ---------------------------------------------------------------------------
def _norm_scale(norm: str, n: int) -> float:
    if norm == "euclidean":
        return 1.0
    if norm == "empirical":
        return float(np.sqrt(n))
    raise ValueError(f"norm must be 'euclidean' or 'empirical', got {norm!r}")


class Ball(FunctionClass):
    """Closed ball ``{v : |v - center| <= radius}``.

    ``norm="euclidean"`` measures the radius in the plain Euclidean norm of
    R^n; ``norm="empirical"`` in the 1/sqrt(n)-scaled norm.
    """

    kind = "Ball"

    def __init__(self, n, radius=1.0, center=None, norm="euclidean", design=None):
        super().__init__(n, _as_design(design))
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        self.radius = float(radius)
        self.norm = norm
        self.center = np.zeros(n) if center is None else _as_vector(center, n, "center")
        self._r = self.radius * _norm_scale(norm, n)

    def _project(self, y, tol):
        return project_ball(y, self.center, self._r)

    def _violation(self, v):
        d = v - self.center
        return max(0.0, (np.sqrt(d @ d) - self._r) / _norm_scale(self.norm, self.n))

    def bounding_box(self):
        return self.center - self._r, self.center + self._r

    def frame(self):
        return np.zeros((self.n, 0)) if self._r == 0 else None

    def describe(self):
        return {"kind": self.kind, "n": self.n, "radius": self.radius, "norm": self.norm}


class Box(FunctionClass):
    kind = "Box"

    def __init__(self, n, lower=0.0, upper=1.0, design=None):
        super().__init__(n, _as_design(design))
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def _project(self, y, tol):
        return np.clip(y, self.lower, self.upper)

    def _violation(self, v):
        return float(max(0.0, np.max(v - self.upper), np.max(self.lower - v)))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def frame(self):
        flat = self.upper == self.lower
        if not np.any(flat):
            return None
        return np.eye(self.n)[:, ~flat]

    def polyhedral_form(self):
        I = np.eye(self.n)
        return np.vstack([I, -I]), np.concatenate([self.upper, -self.lower]), None, None

    def describe(self):
        lo, hi = self.lower, self.upper
        scalar = np.all(lo == lo[0]) and np.all(hi == hi[0])
        return {
            "kind": self.kind,
            "n": self.n,
            "lower": float(lo[0]) if scalar else lo.tolist(),
            "upper": float(hi[0]) if scalar else hi.tolist(),
        }


class HalfSpace(FunctionClass):
    """``{v : <normal, v> >= offset}``; default ``{v : v_1 >= 0}``.

    Unbounded, so every report built on it carries ``diameter_unbounded``.
    """

    kind = "HalfSpace"
    diameter_bounded = False

    def __init__(self, n, normal=None, offset=0.0, design=None):
        super().__init__(n, _as_design(design))
        if normal is None:
            normal = np.zeros(n)
            normal[0] = 1.0
        self.normal = _as_vector(normal, n, "normal")
        if not np.any(self.normal):
            raise ValueError("normal must be nonzero")
        self.offset = float(offset)

    def _project(self, y, tol):
        return project_halfspace(y, self.normal, self.offset)

    def _violation(self, v):
        return max(0.0, (self.offset - self.normal @ v) / np.linalg.norm(self.normal))

    def polyhedral_form(self):
        return -self.normal[None, :], np.array([-self.offset]), None, None

    def certificate(self, y, v):
        y = _as_vector(y, self.n)
        v = _as_vector(v, self.n)
        r = y - v
        # r must be a nonpositive multiple of the normal, zero unless active
        a = self.normal / np.linalg.norm(self.normal)
        lam = -(r @ a)
        off_ray = float(np.linalg.norm(r + lam * a))
        slack = float(a @ v - self.offset / np.linalg.norm(self.normal))
        return max(off_ray, max(0.0, -lam), abs(lam * slack), self._violation(v)) / self.n

    def describe(self):
        return {"kind": self.kind, "n": self.n, "offset": self.offset, "diameter_unbounded": True}


# ---------------------------------------------------------------------------
def _componentwise_hasse(points: np.ndarray) -> np.ndarray:
    """Covering pairs (i, j) of the componentwise order on distinct points."""
    leq = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    np.fill_diagonal(leq, False)
    R = leq.astype(np.int64)
    through = (R @ R) > 0
    i, j = np.nonzero(leq & ~through)
    return np.stack([i, j], axis=1)


def _matchings(pairs: np.ndarray, m: int):
    """Greedy split of edges into groups with no shared endpoint."""
    groups = []
    remaining = [tuple(p) for p in pairs]
    while remaining:
        used = np.zeros(m, dtype=bool)
        group, rest = [], []
        for i, j in remaining:
            if used[i] or used[j]:
                rest.append((i, j))
            else:
                used[i] = used[j] = True
                group.append((i, j))
        groups.append(np.array(group, dtype=np.int64))
        remaining = rest
    return groups


class _WeightedCoords(FunctionClass):
    """Shared machinery for classes constrained on the distinct design points."""

    method = "ldp"

    def _setup_ties(self):
        self.ties = _Ties(self.design)

    def _poly_rows(self):
        raise NotImplementedError

    def _build_projector(self):
        # built on first use: large realizations are often only needed in LP form
        self._projector_cache = None

    @property
    def _projector(self):
        if self._projector_cache is None:
            A, b = self._poly_rows()
            E = None if self.ties.trivial else self.ties.expansion()
            self._projector_cache = (PolyhedralProjector(A, b, B=E) if A.shape[0] else False,)
        return self._projector_cache[0] or None

    def polyhedral_form(self):
        A, b = self._poly_rows()
        E = None if self.ties.trivial else self.ties.expansion()
        return A, b, None, E

    def _project_ldp(self, y):
        if self._projector is None:
            return self.ties.expand(self.ties.merge(y))
        return self._projector(y)

    def frame(self):
        return self.ties.frame()

    def bounding_box(self):
        if self.bounds is None:
            return None
        return np.full(self.n, self.bounds[0]), np.full(self.n, self.bounds[1])


class IsotonicCone(_WeightedCoords):
    """Monotone (order-preserving) vectors, optionally bounded.

    With a 1-d design and no explicit order the chain order of the covariates
    is used and projection is exact via pool-adjacent-violators. Multivariate
    designs use the componentwise order. ``order`` (list of index pairs
    ``(i, j)`` meaning ``v_i <= v_j``) defines an arbitrary partial order on a
    design-free class of size ``n``.
    """

    kind = "IsotonicCone"

    def __init__(self, design=None, bounds=None, order=None, n=None, method="ldp"):
        design = _as_design(design)
        if design is None:
            if n is None:
                raise ValueError("n or design is required")
            design = None
            n_ = int(n)
        else:
            n_ = design.n
        super().__init__(n_, design)
        self.bounds = _bounds_pair(bounds)
        if method not in ("ldp", "dykstra"):
            raise ValueError("method must be 'ldp' or 'dykstra'")
        self.method = method
        self.explicit_order = order is not None
        if design is None:
            self.ties = _Ties(DesignSet(np.arange(n_, dtype=float)))
        else:
            self._setup_ties()
        if order is not None:
            edges = np.asarray(order, dtype=np.int64).reshape(-1, 2)
            if edges.size and (edges.min() < 0 or edges.max() >= n_):
                raise ValueError("order indices out of range")
            if not self.ties.trivial:
                edges = self.ties.inverse[edges]
                edges = edges[edges[:, 0] != edges[:, 1]]
            self.edges = edges
            self.chain = False
        elif self.ties.unique.shape[1] == 1:
            m = self.ties.m
            self.edges = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
            self.chain = True
        else:
            self.edges = _componentwise_hasse(self.ties.unique)
            self.chain = False
        self._groups = _matchings(self.edges, self.ties.m) if not self.chain else None
        if not self.chain:
            self._build_projector()

    def _poly_rows(self):
        m = self.ties.m
        rows = np.zeros((len(self.edges), m))
        if len(self.edges):
            rows[np.arange(len(self.edges)), self.edges[:, 0]] = 1.0
            rows[np.arange(len(self.edges)), self.edges[:, 1]] = -1.0
        b = np.zeros(len(self.edges))
        if self.bounds is not None:
            lo, hi = self.bounds
            rows = np.vstack([rows, np.eye(m), -np.eye(m)])
            b = np.concatenate([b, np.full(m, hi), np.full(m, -lo)])
        return rows, b

    def _project(self, y, tol):
        if self.chain:
            theta = pava(self.ties.merge(y), self.ties.weights)
            if self.bounds is not None:
                theta = np.clip(theta, *self.bounds)
            return self.ties.expand(theta)
        if self.method == "dykstra":
            return self.ties.expand(self._dykstra(self.ties.merge(y), tol))
        return self._project_ldp(y)

    def _dykstra(self, theta, tol):
        w = self.ties.weights

        def pair_proj(group):
            i, j = group[:, 0], group[:, 1]

            def proj(z):
                z = z.copy()
                bad = z[i] > z[j]
                if np.any(bad):
                    ii, jj = i[bad], j[bad]
                    avg = (w[ii] * z[ii] + w[jj] * z[jj]) / (w[ii] + w[jj])
                    z[ii] = avg
                    z[jj] = avg
                return z

            return proj

        projs = [pair_proj(g) for g in self._groups]
        if self.bounds is not None:
            lo, hi = self.bounds
            projs.append(lambda z: np.clip(z, lo, hi))
        if not projs:
            return theta
        return dykstra(theta, projs, tol=tol * _DYKSTRA_TIGHTEN,
                       check=lambda t: self._violation(self.ties.expand(t)))

    def _violation(self, v):
        theta = self.ties.merge(v)
        worst = self.ties.spread(v)
        if len(self.edges):
            worst = max(worst, float(np.max(theta[self.edges[:, 0]] - theta[self.edges[:, 1]])))
        return max(0.0, worst, _box_violation(v, self.bounds))

    def certificate(self, y, v):
        if not self.chain or self.bounds is not None or not self.ties.trivial:
            return None
        y = _as_vector(y, self.n)
        v = _as_vector(v, self.n)
        order = np.argsort(self.ties.inverse)
        r = (y - v)[order]
        vs = v[order]
        lam = np.cumsum(r)
        strict = np.append(np.diff(vs) > 0, True)
        dual_infeas = float(max(0.0, -lam.min()))
        complementarity = float(np.max(np.abs(lam[strict])))
        return max(dual_infeas, complementarity, self._violation(v)) / self.n

    @property
    def evaluable(self):
        return self.design is not None and not self.explicit_order

    def extend(self, values):
        if not self.evaluable:
            return super().extend(values)
        values = _as_vector(values, self.n)
        theta = self.ties.merge(values)
        uniq = self.ties.unique
        if self.chain:
            u = uniq[:, 0]

            def rule(pts):
                idx = np.searchsorted(u, pts[:, 0], side="right") - 1
                return theta[np.clip(idx, 0, len(u) - 1)]
        else:
            lowest = float(theta.min())

            def rule(pts):
                below = np.all(uniq[None, :, :] <= pts[:, None, :], axis=2)
                vals = np.where(below, theta[None, :], -np.inf).max(axis=1)
                return np.where(np.isfinite(vals), vals, lowest)

        return Extension(rule, values)

    def with_design(self, design):
        if not self.evaluable:
            return super().with_design(design)
        return IsotonicCone(_as_design(design), bounds=self.bounds, method=self.method)

    def describe(self):
        d = {"kind": self.kind, "n": self.n, "order": "chain" if self.chain else "partial",
             "edges": int(len(self.edges))}
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d


class ConvexRegression1D(_WeightedCoords):
    """Convex functions of one covariate: nondecreasing slopes on the sorted design.

    Tied design points are merged (averaged targets, multiplicity weights).
    """

    kind = "ConvexRegression1D"

    def __init__(self, design, bounds=None):
        design = _as_design(design)
        if design is None or design.d != 1:
            raise ValueError("ConvexRegression1D needs a 1-d design")
        super().__init__(design.n, design)
        self.bounds = _bounds_pair(bounds)
        self._setup_ties()
        self._build_projector()

    def _poly_rows(self):
        u = self.ties.unique[:, 0]
        m = len(u)
        rows = []
        if m >= 3:
            g = np.diff(u)
            rows = np.zeros((m - 2, m))
            for k in range(m - 2):
                # -(slope_{k+1} - slope_k) <= 0, scaled by the middle gap pair
                a, c = g[k], g[k + 1]
                scale = a * c / (a + c)
                rows[k, k] = -scale / a
                rows[k, k + 1] = scale * (1 / a + 1 / c)
                rows[k, k + 2] = -scale / c
        rows = np.asarray(rows, dtype=float).reshape(-1, m)
        b = np.zeros(rows.shape[0])
        if self.bounds is not None:
            lo, hi = self.bounds
            rows = np.vstack([rows, np.eye(m), -np.eye(m)])
            b = np.concatenate([b, np.full(m, hi), np.full(m, -lo)])
        return rows, b

    def _project(self, y, tol):
        return self._project_ldp(y)

    def second_differences(self, v):
        """Slope increments on the sorted distinct design (>= 0 for members)."""
        theta = self.ties.merge(_as_vector(v, self.n))
        u = self.ties.unique[:, 0]
        if len(u) < 3:
            return np.zeros(0)
        return np.diff(np.diff(theta) / np.diff(u))

    def _violation(self, v):
        A, b = self._poly_rows()
        theta = self.ties.merge(v)
        worst = self.ties.spread(v)
        if A.shape[0]:
            worst = max(worst, float(np.max(A @ theta - b)))
        return max(0.0, worst)

    @property
    def evaluable(self):
        return True

    def extend(self, values):
        values = _as_vector(values, self.n)
        theta = self.ties.merge(values)
        u = self.ties.unique[:, 0]
        bounds = self.bounds

        def rule(pts):
            z = pts[:, 0]
            if len(u) == 1:
                out = np.full(z.shape, theta[0])
            else:
                out = np.interp(z, u, theta)
                left = z < u[0]
                right = z > u[-1]
                out[left] = theta[0] + (z[left] - u[0]) * (theta[1] - theta[0]) / (u[1] - u[0])
                out[right] = theta[-1] + (z[right] - u[-1]) * (theta[-1] - theta[-2]) / (u[-1] - u[-2])
            return out if bounds is None else np.clip(out, *bounds)

        return Extension(rule, values)

    def with_design(self, design):
        return ConvexRegression1D(_as_design(design), bounds=self.bounds)

    def describe(self):
        d = {"kind": self.kind, "n": self.n}
        if self.bounds is not None:
            d["bounds"] = list(self.bounds)
        return d


class LipschitzBall(_WeightedCoords):
    """L-Lipschitz functions (w.r.t. the design metric) bounded by ``bound``.

    Off-design evaluation uses the McShane extension clipped to the bound, which
    keeps both the Lipschitz constant and the bound.
    """

    kind = "LipschitzBall"

    def __init__(self, design, L=1.0, bound=1.0, method="ldp"):
        design = _as_design(design)
        if design is None:
            raise ValueError("LipschitzBall needs a design")
        super().__init__(design.n, design)
        if L < 0:
            raise ValueError("L must be nonnegative")
        self.L = float(L)
        self.bound = None if bound is None else float(bound)
        self.bounds = None if bound is None else (-self.bound, self.bound)
        if method not in ("ldp", "dykstra"):
            raise ValueError("method must be 'ldp' or 'dykstra'")
        self.method = method
        self._dist = None
        self._setup_ties()
        u = self.ties.unique
        m = self.ties.m
        if u.shape[1] == 1:
            self.pairs = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
        else:
            i, j = np.triu_indices(m, 1)
            self.pairs = np.stack([i, j], axis=1)
        ud = DesignSet(u, metric=design.metric)
        if len(self.pairs):
            dist = ud.distances()
            self.caps = self.L * dist[self.pairs[:, 0], self.pairs[:, 1]]
        else:
            self.caps = np.zeros(0)
        self._build_projector()

    def _poly_rows(self):
        m = self.ties.m
        k = len(self.pairs)
        D = np.zeros((k, m))
        if k:
            D[np.arange(k), self.pairs[:, 0]] = 1.0
            D[np.arange(k), self.pairs[:, 1]] = -1.0
        rows = np.vstack([D, -D])
        b = np.concatenate([self.caps, self.caps])
        if self.bound is not None:
            rows = np.vstack([rows, np.eye(m), -np.eye(m)])
            b = np.concatenate([b, np.full(2 * m, self.bound)])
        return rows, b

    def _project(self, y, tol):
        if self.method == "dykstra":
            return self.ties.expand(self._dykstra(self.ties.merge(y), tol))
        return self._project_ldp(y)

    def _dykstra(self, theta, tol):
        w = self.ties.weights
        projs = []
        for group in _matchings(self.pairs, self.ties.m):
            i, j = group[:, 0], group[:, 1]
            lookup = {tuple(p): c for p, c in zip(map(tuple, self.pairs), self.caps)}
            cap = np.array([lookup[(a, b)] for a, b in group])

            def proj(z, i=i, j=j, cap=cap):
                z = z.copy()
                diff = z[i] - z[j]
                excess = np.abs(diff) - cap
                bad = excess > 0
                if np.any(bad):
                    ii, jj = i[bad], j[bad]
                    move = np.sign(diff[bad]) * excess[bad]
                    tot = w[ii] + w[jj]
                    z[ii] -= move * w[jj] / tot
                    z[jj] += move * w[ii] / tot
                return z

            projs.append(proj)
        if self.bound is not None:
            g = self.bound
            projs.append(lambda z: np.clip(z, -g, g))
        if not projs:
            return theta
        return dykstra(theta, projs, tol=tol * _DYKSTRA_TIGHTEN,
                       check=lambda t: self._violation(self.ties.expand(t)))

    def direct_members(self, rng, count, lo, hi):
        # clipped McShane envelopes of random values: always members, and every
        # member is the envelope of its own values, so the support is dense
        if self._dist is None:
            self._dist = DesignSet(self.ties.unique, metric=self.design.metric).distances()
        lo_t, hi_t = self.ties.merge(lo), self.ties.merge(hi)
        a = rng.uniform(lo_t, hi_t, size=(count, self.ties.m))
        out = np.empty_like(a)
        for k in range(count):
            out[k] = (a[k][:, None] + self.L * self._dist).min(axis=0)
        if self.bound is not None:
            np.clip(out, -self.bound, self.bound, out=out)
        return out[:, self.ties.inverse]

    def _violation(self, v):
        theta = self.ties.merge(v)
        worst = self.ties.spread(v)
        if len(self.pairs):
            gaps = np.abs(theta[self.pairs[:, 0]] - theta[self.pairs[:, 1]]) - self.caps
            worst = max(worst, float(gaps.max()))
        return max(0.0, worst, _box_violation(v, self.bounds))

    @property
    def evaluable(self):
        return True

    def extend(self, values):
        values = _as_vector(values, self.n)
        theta = self.ties.merge(values)
        ud = DesignSet(self.ties.unique, metric=self.design.metric)
        L, bound = self.L, self.bound

        def rule(pts):
            out = np.empty(pts.shape[0])
            for s in range(0, pts.shape[0], 4096):
                block = pts[s:s + 4096]
                out[s:s + 4096] = (theta[:, None] + L * ud.distances(block)).min(axis=0)
            return out if bound is None else np.clip(out, -bound, bound)

        return Extension(rule, values)

    def evaluate_many(self, members, points):
        members = np.atleast_2d(np.asarray(members, dtype=float))
        theta = np.array([self.ties.merge(v) for v in members])
        ud = DesignSet(self.ties.unique, metric=self.design.metric)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty((theta.shape[0], pts.shape[0]))
        for s in range(0, pts.shape[0], 1024):
            D = self.L * ud.distances(pts[s:s + 1024])  # (m_unique, block)
            out[:, s:s + 1024] = (theta[:, :, None] + D[None]).min(axis=1)
        return out if self.bound is None else np.clip(out, -self.bound, self.bound)

    def with_design(self, design):
        return LipschitzBall(_as_design(design), L=self.L, bound=self.bound, method=self.method)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "L": self.L, "bound": self.bound}


# ---------------------------------------------------------------------------
class BallRestriction(FunctionClass):
    """Members of ``inner`` within ``radius`` of ``center``.

    Projection alternates between the inner class and the ball (Dykstra);
    nested balls with a common center and a zero radius are handled exactly.
    """

    kind = "BallRestriction"

    def __init__(self, inner: FunctionClass, center, radius, norm="euclidean"):
        super().__init__(inner.n, inner.design)
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        self.inner = inner
        self.center = _as_vector(center, inner.n, "center")
        self.radius = float(radius)
        self.norm = norm
        self.ball = Ball(inner.n, radius, self.center, norm=norm)
        if self.radius == 0 and inner.violation(self.center) > 1e-7:
            raise ValueError("a zero-radius restriction must be centered at a member")
        self.diameter_bounded = True

    def _project(self, y, tol):
        if self.radius == 0:
            return self.center.copy()
        inner = self.inner
        if isinstance(inner, Ball) and np.array_equal(inner.center, self.center):
            return project_ball(y, self.center, min(inner._r, self.ball._r))
        return dykstra(
            y,
            [lambda z: inner._project(z, tol), self.ball._project_unchecked],
            tol=tol * _DYKSTRA_TIGHTEN,
            check=self._violation,
        )

    def _violation(self, v):
        return max(self.inner._violation(v), self.ball._violation(v))

    def bounding_box(self):
        lo, hi = self.ball.bounding_box()
        box = self.inner.bounding_box()
        if box is not None:
            lo, hi = np.maximum(lo, box[0]), np.minimum(hi, box[1])
        return lo, hi

    def frame(self):
        if self.radius == 0:
            return np.zeros((self.n, 0))
        return self.inner.frame()

    @property
    def evaluable(self):
        return self.inner.evaluable

    def extend(self, values):
        return self.inner.extend(values)

    def describe(self):
        return {"kind": self.kind, "n": self.n, "inner": self.inner.describe(),
                "radius": self.radius, "norm": self.norm}


def _ball_project_unchecked(self, z):
    return project_ball(z, self.center, self._r)


Ball._project_unchecked = _ball_project_unchecked


# ---------------------------------------------------------------------------
def project(cls: FunctionClass, target, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Euclidean projection of ``target`` onto the realized class."""
    return cls.project(target, tol)


def violation(cls: FunctionClass, v) -> float:
    return cls.violation(v)


def restrict_to_ball(cls: FunctionClass, center, radius, norm="euclidean") -> BallRestriction:
    """The class intersected with a ball around ``center``."""
    return BallRestriction(cls, center, radius, norm=norm)
