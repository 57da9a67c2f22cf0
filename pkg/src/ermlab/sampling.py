"""Seeded sampling of class members."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .classes import DEFAULT_TOL, FunctionClass
from .errors import UnboundedClass

_PILOT = 400
_MIN_ACCEPT = 0.05


def _resolve_box(cls: FunctionClass, box):
    if box is not None:
        lo, hi = box
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (cls.n,)).copy()
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (cls.n,)).copy()
        return lo, hi
    bb = cls.bounding_box()
    if bb is None:
        raise UnboundedClass(f"{cls.kind} has no bounding box; pass box=(lo, hi)")
    return bb


class _Proposal:
    """Uniform proposals on the box, or on the box's shadow in the class's affine hull."""

    def __init__(self, cls, lo, hi, tol):
        self.lo, self.hi = lo, hi
        Q = cls.frame()
        self.Q = Q
        if Q is not None:
            self.x0 = cls.project(0.5 * (lo + hi), tol)
            a, b = Q * (lo - self.x0)[:, None], Q * (hi - self.x0)[:, None]
            self.tlo = np.minimum(a, b).sum(axis=0)
            self.thi = np.maximum(a, b).sum(axis=0)

    @property
    def degenerate(self):
        if self.Q is None:
            return not np.all(self.hi > self.lo)
        return self.Q.shape[1] == 0 or not np.all(self.thi > self.tlo)

    def draw(self, rng, m):
        if self.Q is None:
            return rng.uniform(self.lo, self.hi, size=(m, self.lo.shape[0]))
        t = rng.uniform(self.tlo, self.thi, size=(m, self.Q.shape[1]))
        return self.x0 + t @ self.Q.T


def _acceptance(cls, prop, rng, tol):
    draws = prop.draw(rng, _PILOT)
    return np.mean([cls.violation(d) <= tol for d in draws])


def sample_members(
    cls: FunctionClass,
    count: int,
    seed: int,
    method: str = "auto",
    box=None,
    tol: float = DEFAULT_TOL,
    thin: Optional[int] = None,
) -> np.ndarray:
    """``count`` members of the class as rows of a (count, n) array.

    Methods:
      ``rejection``   uniform on the class via rejection from the bounding box
                      (its shadow in the affine hull for lower-dimensional classes);
      ``hit-and-run`` approximately uniform random walk in the affine hull;
      ``project``     uniform box draws mapped onto the class by projection;
      ``direct``      the class's own construction rule (LipschitzBall);
      ``auto``        rejection when the pilot acceptance rate is at least 5%,
                      otherwise ``direct`` where available and projection last.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    lo, hi = _resolve_box(cls, box)
    rng = np.random.default_rng(seed)
    if method in ("auto", "rejection"):
        prop = _Proposal(cls, lo, hi, tol)
    if method == "auto":
        method = "project"
        if not prop.degenerate and _acceptance(cls, prop, rng, tol) >= _MIN_ACCEPT:
            method = "rejection"
        elif type(cls).direct_members is not FunctionClass.direct_members:
            method = "direct"
    if method == "direct":
        out = cls.direct_members(rng, count, lo, hi)
        if out is None:
            raise ValueError(f"{cls.kind} has no direct sampling rule")
        return out
    if method == "rejection":
        return _rejection(cls, count, prop, rng, tol)
    if method == "project":
        draws = rng.uniform(lo, hi, size=(count, cls.n))
        return np.array([cls.project(d, tol) for d in draws]).reshape(count, cls.n)
    if method == "hit-and-run":
        return _hit_and_run(cls, count, lo, hi, rng, tol, thin)
    raise ValueError(f"unknown sampling method {method!r}")


def sample_member(cls: FunctionClass, seed: int, method: str = "auto", box=None,
                  tol: float = DEFAULT_TOL) -> np.ndarray:
    return sample_members(cls, 1, seed, method=method, box=box, tol=tol)[0]


def _rejection(cls, count, prop, rng, tol, max_tries=10_000_000):
    out = np.empty((count, cls.n))
    got = tries = 0
    while got < count:
        if tries > max_tries:
            raise RuntimeError("rejection sampling acceptance rate is too low")
        batch = prop.draw(rng, max(64, 2 * (count - got)))
        tries += batch.shape[0]
        for d in batch:
            if cls.violation(d) <= tol:
                out[got] = d
                got += 1
                if got == count:
                    break
    return out


def _chord(cls, x, u, lo, hi, tol, iters=50):
    """Largest s >= 0 with x + s u still a member (bisection)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.where(u > 0, (hi - x) / u, np.where(u < 0, (lo - x) / u, np.inf))
    s_hi = float(np.min(steps)) if steps.size else 0.0
    if not np.isfinite(s_hi):
        s_hi = 1.0
        while cls.violation(x + s_hi * u) <= tol and s_hi < 1e6:
            s_hi *= 2
    if cls.violation(x + s_hi * u) <= tol:
        return s_hi
    s_lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (s_lo + s_hi)
        if cls.violation(x + mid * u) <= tol:
            s_lo = mid
        else:
            s_hi = mid
    return s_lo


def _hit_and_run(cls, count, lo, hi, rng, tol, thin):
    Q = cls.frame()
    k = cls.n if Q is None else Q.shape[1]
    start = rng.uniform(lo, hi, size=(32, cls.n))
    x = np.mean([cls.project(s, tol) for s in start], axis=0)
    if k == 0:
        return np.tile(x, (count, 1))
    thin = thin or max(10, 2 * k)
    out = np.empty((count, cls.n))
    burn = 5 * thin
    total = burn + count * thin
    j = 0
    for step in range(total):
        d = rng.standard_normal(k)
        u = d if Q is None else Q @ d
        u /= np.linalg.norm(u)
        a = _chord(cls, x, u, lo, hi, tol)
        b = _chord(cls, x, -u, lo, hi, tol)
        x = x + rng.uniform(-b, a) * u
        if step >= burn and (step - burn) % thin == thin - 1:
            out[j] = x
            j += 1
    return out
