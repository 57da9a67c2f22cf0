"""Population-norm distances between class members."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classes import Extension, FunctionClass
from .design import PopulationSampler
from .errors import EvaluationUnavailable


@dataclass(frozen=True)
class DistanceEstimate:
    sq: float  # unbiased estimate of the squared distance
    sq_se: float
    value: float  # sqrt(sq)
    m: int

    def to_dict(self):
        return {"sq": self.sq, "sq_se": self.sq_se, "value": self.value, "m": self.m}


def as_function(member, cls: FunctionClass = None):
    """Turn a member (callable, Extension or design vector + class) into a callable."""
    if callable(member):
        return member
    if cls is None:
        raise EvaluationUnavailable("a design vector needs its class to be evaluated")
    return cls.extend(member)


def population_distance(
    sampler: PopulationSampler,
    f,
    g,
    m: int,
    seed: int,
    cls: FunctionClass = None,
) -> DistanceEstimate:
    """Monte Carlo estimate of the L2(P) distance between ``f`` and ``g`` on ``m`` draws."""
    if m < 1:
        raise ValueError("m must be >= 1")
    f = as_function(f, cls)
    g = as_function(g, cls)
    z = sampler.sample(m, seed)
    diff = np.asarray(f(z), dtype=float) - np.asarray(g(z), dtype=float)
    sq_terms = diff * diff
    sq = float(np.mean(sq_terms))
    se = float(np.std(sq_terms, ddof=1) / np.sqrt(m)) if m > 1 else float("nan")
    return DistanceEstimate(sq=sq, sq_se=se, value=float(np.sqrt(sq)), m=m)


__all__ = ["DistanceEstimate", "Extension", "as_function", "population_distance"]
