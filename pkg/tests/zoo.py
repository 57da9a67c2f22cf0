"""Small instances of every class kind for sweeps."""
import numpy as np

from ermlab.classes import (
    AffineSubspace, Ball, BallRestriction, Box, ConvexRegression1D, HalfSpace, IsotonicCone,
    LipschitzBall, constants, full_space,
)
from ermlab.design import DesignSet

KINDS = (
    "constants", "linear_bounded", "full", "Ball", "Box", "HalfSpace", "Isotonic1D",
    "Isotonic2D", "IsotonicBounded", "Convex1D", "Lipschitz1D", "Lipschitz2D",
    "BallRestriction",
)


def make(kind: str, n: int = 8, seed: int = 0):
    rng = np.random.default_rng(seed)
    x = DesignSet(np.sort(rng.uniform(0, 1, n)))
    x2 = DesignSet(rng.uniform(0, 1, (n, 2)))
    if kind == "constants":
        return constants(x)
    if kind == "linear_bounded":
        return AffineSubspace(x, basis="linear", bounds=(-1.0, 1.0))
    if kind == "full":
        return full_space(n)
    if kind == "Ball":
        return Ball(n, radius=1.5, center=rng.normal(size=n) * 0.2)
    if kind == "Box":
        return Box(n, -0.5, 0.5)
    if kind == "HalfSpace":
        return HalfSpace(n, normal=rng.normal(size=n), offset=0.3)
    if kind == "Isotonic1D":
        return IsotonicCone(x)
    if kind == "Isotonic2D":
        return IsotonicCone(x2)
    if kind == "IsotonicBounded":
        return IsotonicCone(x, bounds=(0.0, 1.0))
    if kind == "Convex1D":
        return ConvexRegression1D(x)
    if kind == "Lipschitz1D":
        return LipschitzBall(x, L=1.0, bound=1.0)
    if kind == "Lipschitz2D":
        return LipschitzBall(x2, L=2.0, bound=1.0)
    if kind == "BallRestriction":
        return BallRestriction(IsotonicCone(x), np.zeros(n), 1.0)
    raise KeyError(kind)


def member_box(cls, scale=2.0):
    bb = cls.bounding_box()
    if bb is None:
        return -scale * np.ones(cls.n), scale * np.ones(cls.n)
    return bb
