"""Noise models, the least-squares fit, and empirical-loss geometry."""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .classes import DEFAULT_TOL, FunctionClass
from .design import empirical_inner, empirical_norm
from .errors import DimensionMismatch, NotAMember, UnboundedClass
from .sampling import sample_members

NOISE_KINDS = ("GaussianIsotropic", "Rademacher", "UniformBounded")
_ALIASES = {"gaussian": "GaussianIsotropic", "rademacher": "Rademacher", "uniform": "UniformBounded"}

# Uniform noise is the image of Gaussian noise under the coordinatewise map
# x -> sqrt(3) (2 Phi(x) - 1), whose Lipschitz constant is this.
_UNIFORM_LIP = np.sqrt(3.0) * 2.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class NoiseModel:
    """Distribution of the noise vector.

    All kinds are symmetric and have per-coordinate variance ``sigma**2``.
    ``UniformBounded`` is uniform on ``[-sqrt(3) sigma, sqrt(3) sigma]``.
    """

    kind: str = "GaussianIsotropic"
    sigma: float = 1.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "kind", kind)

    @property
    def gamma2(self) -> Optional[float]:
        """Almost-sure bound on |xi_i| (None when unbounded)."""
        if self.kind == "Rademacher":
            return self.sigma
        if self.kind == "UniformBounded":
            return float(np.sqrt(3.0) * self.sigma)
        return None

    @property
    def lcp_certified(self) -> bool:
        return self.kind != "Rademacher"

    @property
    def c_L(self) -> Optional[float]:
        """Declared concentration constant: P(|F - EF| > t) <= 2 exp(-c_L t^2 / sigma^2)."""
        if self.kind == "GaussianIsotropic":
            return 0.5
        if self.kind == "UniformBounded":
            return float(0.5 / _UNIFORM_LIP**2)
        return None

    @property
    def symmetric(self) -> bool:
        return True

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(shape)
        if self.kind == "GaussianIsotropic":
            return self.sigma * rng.standard_normal(shape)
        if self.kind == "Rademacher":
            return self.sigma * (2.0 * rng.integers(0, 2, size=shape) - 1.0)
        a = np.sqrt(3.0) * self.sigma
        return rng.uniform(-a, a, size=shape)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma, "lcp_certified": self.lcp_certified}


def generate_noise(model: NoiseModel, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return model.draw(np.random.default_rng(seed), n)


def generate_noise_batch(model: NoiseModel, n: int, count: int, seed: int) -> np.ndarray:
    """``count`` independent noise vectors (rows) from one seeded stream."""
    return model.draw(np.random.default_rng(seed), (count, n))


def _check_dims(*vs, n=None):
    arrs = [np.asarray(v, dtype=float) for v in vs]
    n = arrs[0].shape[0] if n is None else n
    for a in arrs:
        if a.ndim != 1 or a.shape[0] != n:
            raise DimensionMismatch(n, a.shape[0] if a.ndim == 1 else a.shape)
    return arrs


def empirical_loss(f, y) -> float:
    f, y = _check_dims(f, y)
    r = f - y
    return float(np.mean(r * r))


def noise_correlation(f, g, noise) -> float:
    """Empirical noise process at f - g."""
    f, g, noise = _check_dims(f, g, noise)
    return empirical_inner(f - g, noise)


def shifted_loss(f, fstar, noise) -> float:
    """Empirical loss of ``f`` minus the loss of the noise alone."""
    f, fstar, noise = _check_dims(f, fstar, noise)
    return empirical_loss(f, fstar + noise) - float(np.mean(noise * noise))


@dataclass
class ErmSolution:
    fhat: np.ndarray
    y: np.ndarray
    loss: float
    shifted_loss: float
    kkt_gap: Optional[float]
    seed: Optional[int]
    tol: float
    certificate: Optional[float] = None
    probes_used: int = 0

    def to_dict(self) -> dict:
        return {
            "fhat": self.fhat.tolist(),
            "loss": self.loss,
            "shifted_loss": self.shifted_loss,
            "kkt_gap": self.kkt_gap,
            "seed": self.seed,
            "tol": self.tol,
        }


_PROBE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
PROBE_COUNT = 64


def _probe_members(cls: FunctionClass, y: np.ndarray, fhat: np.ndarray, seed: int):
    cached = _PROBE_CACHE.get(cls)
    if cached is not None and cached[0] == seed:
        return cached[1]
    try:
        probes = sample_members(cls, PROBE_COUNT, seed, method="project")
        _PROBE_CACHE[cls] = (seed, probes)
        return probes
    except UnboundedClass:
        # unbounded class: probe a box around the data instead (not cached)
        s = 2.0 * max(1.0, float(np.max(np.abs(y - fhat))), float(np.max(np.abs(y))))
        return sample_members(cls, PROBE_COUNT, seed, method="project", box=(fhat - s, fhat + s))


def kkt_gap(fhat, y, members) -> float:
    """max over members u of <u - fhat, y - fhat>_n, floored at 0."""
    members = np.atleast_2d(members)
    if members.size == 0:
        return 0.0
    vals = (members - fhat) @ (y - fhat) / fhat.shape[0]
    return float(max(0.0, vals.max()))


def solve_erm(
    cls: FunctionClass,
    fstar,
    noise,
    tol: float = DEFAULT_TOL,
    seed: Optional[int] = None,
    candidates: Optional[Sequence] = None,
    probes: bool = True,
    probe_seed: int = 0,
) -> ErmSolution:
    """Least-squares fit over the class for observations ``fstar + noise``."""
    fstar, noise = _check_dims(fstar, noise, n=cls.n)
    y = fstar + noise
    fhat = cls.project(y, tol)
    loss = empirical_loss(fhat, y)
    gap = None
    used = 0
    if probes:
        members = _probe_members(cls, y, fhat, probe_seed)
        if candidates is not None and len(candidates):
            members = np.vstack([members, np.atleast_2d(np.asarray(candidates, dtype=float))])
        used = members.shape[0]
        gap = kkt_gap(fhat, y, members)
    return ErmSolution(
        fhat=fhat,
        y=y,
        loss=loss,
        shifted_loss=loss - float(np.mean(noise * noise)),
        kkt_gap=gap,
        seed=seed,
        tol=tol,
        certificate=cls.certificate(y, fhat),
        probes_used=used,
    )


# Relative slack absorbing rounding in loss comparisons at the boundary.
_LOSS_SLACK = 1e-12


def in_O_delta(cls: FunctionClass, solution: ErmSolution, candidate, delta: float,
               tol: Optional[float] = None) -> bool:
    """Whether ``candidate`` is a delta-approximate minimizer (boundary included)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    tol = solution.tol if tol is None else tol
    (candidate,) = _check_dims(candidate, n=cls.n)
    viol = cls.violation(candidate)
    if viol > tol:
        raise NotAMember(viol, tol)
    loss = empirical_loss(candidate, solution.y)
    bound = solution.loss + delta
    return loss <= bound + _LOSS_SLACK * max(1.0, abs(bound))


def o_delta_geometric_check(solution: ErmSolution, candidate, delta: float,
                            tol: Optional[float] = None):
    """(squared distance to fhat, delta, whether the containment holds)."""
    tol = solution.tol if tol is None else tol
    (candidate,) = _check_dims(candidate, n=solution.fhat.shape[0])
    lhs = empirical_norm(candidate - solution.fhat) ** 2
    return lhs, float(delta), bool(lhs <= delta + 10 * tol)
