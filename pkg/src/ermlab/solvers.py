"""Projection primitives: pool-adjacent-violators, Dykstra, least-distance QP.

Every routine here is a Euclidean projection in R^n (unscaled inner product);
classes rescale where the empirical norm is meant.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import lsq_linear, nnls

from .errors import NonConvergence

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _pava(y, w):
    n = y.shape[0]
    sums = np.empty(n)
    wts = np.empty(n)
    lens = np.empty(n, dtype=np.int64)
    k = -1
    for i in range(n):
        k += 1
        sums[k] = w[i] * y[i]
        wts[k] = w[i]
        lens[k] = 1
        while k > 0 and sums[k - 1] * wts[k] > sums[k] * wts[k - 1]:
            sums[k - 1] += sums[k]
            wts[k - 1] += wts[k]
            lens[k - 1] += lens[k]
            k -= 1
    out = np.empty(n)
    pos = 0
    for b in range(k + 1):
        val = sums[b] / wts[b]
        for _ in range(lens[b]):
            out[pos] = val
            pos += 1
    return out


def pava(y, weights=None) -> np.ndarray:
    """Weighted nondecreasing isotonic regression of ``y`` (exact, O(n))."""
    y = np.ascontiguousarray(y, dtype=float)
    if y.size <= 1:
        return y.copy()
    w = np.ones_like(y) if weights is None else np.ascontiguousarray(weights, dtype=float)
    if w.shape != y.shape or np.any(w <= 0):
        raise ValueError("weights must be positive and match y")
    return _pava(y, w)


def project_ball(y, center, radius):
    """Euclidean projection onto the closed ball B(center, radius)."""
    d = y - center
    r = np.sqrt(d @ d)
    if r <= radius:
        return y.copy()
    return center + d * (radius / r)


def project_halfspace(y, normal, offset):
    """Projection onto {v : <normal, v> >= offset}."""
    gap = offset - normal @ y
    if gap <= 0:
        return y.copy()
    return y + normal * (gap / (normal @ normal))


def dykstra(
    y,
    projections: Sequence[Callable[[np.ndarray], np.ndarray]],
    tol: float = 1e-8,
    max_iter: int = 100_000,
    check: Optional[Callable[[np.ndarray], float]] = None,
) -> np.ndarray:
    """Dykstra's alternating projections onto an intersection of convex sets.

    Stops once a full sweep moves the iterate by at most ``tol`` in sup norm and,
    if ``check`` is given, ``check(x) <= tol``.
    """
    x = np.array(y, dtype=float)
    incs = [np.zeros_like(x) for _ in projections]
    change = np.inf
    for it in range(1, max_iter + 1):
        start = x
        for j, proj in enumerate(projections):
            z = x + incs[j]
            x = proj(z)
            incs[j] = z - x
        change = float(np.max(np.abs(x - start))) if x.size else 0.0
        if change <= tol and (check is None or check(x) <= tol):
            return x
        if change == 0:
            # exact stall: further sweeps cannot reduce the rounding-level violation
            raise NonConvergence(it, check(x), solver="Dykstra")
    raise NonConvergence(max_iter, change, solver="Dykstra")


def _ldp_from_nnls(E, f, n, u):
    r = E @ u - f
    if np.linalg.norm(r) < 1e-12:
        raise ValueError("constraint set is empty")
    return -r[:n] / r[n]


def _polish(G, h, z):
    """Exact minimum-norm point on the active constraints, kept when it is valid."""
    act = np.nonzero(G @ z - h <= 1e-9)[0]
    if act.size == 0:
        return np.zeros_like(z) if np.all(h <= 0) else z
    Ga = G[act]
    lam = np.linalg.lstsq(Ga @ Ga.T, h[act], rcond=None)[0]
    cand = Ga.T @ lam
    if np.min(G @ cand - h) >= -1e-12 and lam.min() >= -1e-10:
        return cand
    return z


def least_distance(G, h) -> np.ndarray:
    """Minimum-norm z with ``G z >= h`` (Lawson-Hanson least-distance programming).

    The right-hand side is normalized first (the solution scales with it). An
    NNLS answer failing the feasibility check is redone with bounded-variable
    least squares, then polished on its active set.
    """
    m, n = G.shape
    if m == 0 or np.all(h <= 0):
        return np.zeros(n)
    scale = float(np.max(np.abs(h)))
    hs = h / scale
    E = np.vstack([G.T, hs[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    feas = 1e-10 * max(1.0, float(np.max(np.abs(G))))
    u, _ = nnls(E, f, maxiter=max(50, 20 * m))
    z = _ldp_from_nnls(E, f, n, u)
    if not np.min(G @ z - hs) >= -feas:
        res = lsq_linear(E, f, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
        z = _ldp_from_nnls(E, f, n, res.x)
    z = _polish(G, hs, z)
    worst = float(np.min(G @ z - hs))
    if not worst >= -1e-8:
        raise NonConvergence(1, -worst * scale, solver="LDP")
    return z * scale


class PolyhedralProjector:
    """Projection onto {offset + B theta : A theta <= b}.

    ``B`` (n x k) must have full column rank; ``None`` means the identity.
    """

    def __init__(self, A, b, offset=None, B=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).ravel()
        self.offset = None if offset is None else np.asarray(offset, dtype=float)
        if B is None:
            self.Q = None
            self._Ainv = self.A
        else:
            B = np.asarray(B, dtype=float)
            Q, R = np.linalg.qr(B)
            self.Q = Q
            self._Rinv = np.linalg.inv(R)
            self._Ainv = self.A @ self._Rinv if self.A.size else self.A

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        base = y if self.offset is None else y - self.offset
        c = base if self.Q is None else self.Q.T @ base
        if self._Ainv.shape[0]:
            z = least_distance(-self._Ainv, self._Ainv @ c - self.b)
        else:
            z = np.zeros_like(c)
        coord = c + z
        v = coord if self.Q is None else self.Q @ coord
        return v if self.offset is None else v + self.offset
