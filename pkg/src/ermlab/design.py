"""Designs (covariate sets), population samplers and seed derivation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """Deterministic child seed for ``(base, *keys)``; streams never collide."""
    ss = np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def empirical_norm(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.mean(v * v))) if v.size else 0.0


def empirical_inner(u, v) -> float:
    return float(np.mean(np.asarray(u, dtype=float) * np.asarray(v, dtype=float)))


@dataclass(frozen=True, eq=False)
class DesignSet:
    """n covariate vectors in R^d with a pairwise metric (Euclidean by default)."""

    points: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("a design needs n >= 1 points of dimension d >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("design points must be finite")
        if self.metric not in ("euclidean", "chebyshev"):
            raise ValueError(f"unknown metric {self.metric!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def distances(self, other: Optional[np.ndarray] = None) -> np.ndarray:
        """Pairwise distances between the design points and ``other`` (default: itself)."""
        a = self.points
        b = a if other is None else np.atleast_2d(np.asarray(other, dtype=float))
        if b.shape[1] != a.shape[1] and b.shape[0] == a.shape[1]:
            b = b.T
        diff = a[:, None, :] - b[None, :, :]
        if self.metric == "chebyshev":
            return np.abs(diff).max(axis=2)
        return np.sqrt((diff * diff).sum(axis=2))

    @classmethod
    def grid(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "DesignSet":
        """Midpoint grid on [lo, hi]."""
        return cls(lo + (hi - lo) * (np.arange(n) + 0.5) / n)

    def concat(self, other: "DesignSet") -> "DesignSet":
        return DesignSet(np.vstack([self.points, other.points]), metric=self.metric)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "metric": self.metric}


_DISTRIBUTIONS = ("uniform", "gaussian", "sphere")


@dataclass(frozen=True, eq=False)
class PopulationSampler:
    """Sampling rule for X ~ P.

    ``distribution`` is one of ``uniform`` (on ``[lo, hi]^d``), ``gaussian``
    (standard normal in R^d) or ``sphere`` (uniform on the unit sphere of R^d).
    A callable ``draw(rng, m) -> (m, d) array`` may be supplied instead.
    """

    distribution: str = "uniform"
    d: int = 1
    lo: float = 0.0
    hi: float = 1.0
    draw: Optional[Callable[[np.random.Generator, int], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        if self.draw is None and self.distribution not in _DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    def sample(self, m: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self._draw(rng, m)

    def _draw(self, rng: np.random.Generator, m: int) -> np.ndarray:
        if self.draw is not None:
            return np.atleast_2d(np.asarray(self.draw(rng, m), dtype=float)).reshape(m, -1)
        if self.distribution == "uniform":
            return rng.uniform(self.lo, self.hi, size=(m, self.d))
        if self.distribution == "gaussian":
            return rng.standard_normal((m, self.d))
        g = rng.standard_normal((m, self.d))
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def design(self, n: int, seed: int) -> DesignSet:
        return DesignSet(self.sample(n, seed))

    def to_dict(self) -> dict:
        if self.draw is not None:
            raise ValueError("custom draw rules cannot be serialized")
        return {"distribution": self.distribution, "d": self.d, "lo": self.lo, "hi": self.hi}
