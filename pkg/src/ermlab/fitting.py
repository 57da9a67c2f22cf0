"""Log-log power-law fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np
from scipy.stats import linregress

from .errors import NonPositiveValue


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    stderr: float
    r_squared: float
    n_range: Tuple[float, float]

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "n_range": list(self.n_range),
        }


def fit_exponent(pairs: Iterable[Tuple[float, float]]) -> RateFit:
    """Least-squares slope of log(value) against log(n)."""
    pairs = [(float(n), float(v)) for n, v in pairs]
    if len(pairs) < 4:
        raise ValueError("at least 4 (n, value) pairs are needed")
    n, v = np.array(pairs).T
    if np.any(v <= 0) or np.any(n <= 0):
        raise NonPositiveValue("every n and value must be positive")
    res = linregress(np.log(n), np.log(v))
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 1.0
    return RateFit(
        exponent=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(max(res.stderr, 0.0)),
        r_squared=min(1.0, max(0.0, r2)),
        n_range=(float(n.min()), float(n.max())),
    )
