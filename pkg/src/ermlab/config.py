"""Experiment configuration: loading, defaults, validation, hashing.

A configuration is a YAML or JSON mapping.  Only ``experiment`` and ``class``
are required (``class`` is optional for counterexample runs, which carry
their own models).  Everything else is filled from :data:`DEFAULTS`::

    schema_version: 1
    experiment: decompose
    class: {kind: constants}
    design: {type: grid, n: 64}
    noise: {kind: gaussian, sigma: 1.0}
    replicates: {R: 2000}
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import yaml

from .classes import (
    AffineSubspace, Ball, BallRestriction, Box, ConvexRegression1D, FunctionClass, HalfSpace,
    IsotonicCone, LipschitzBall, constants, full_space,
)
from .design import DesignSet, PopulationSampler
from .erm import _ALIASES, NOISE_KINDS, NoiseModel
from .errors import ConfigInvalid, IoFailure

SCHEMA_VERSION = 1

EXPERIMENTS = ("project", "decompose", "rate-scan", "geometry", "stability",
               "fixed-point", "jagged", "counterexample")

CLASS_KINDS = ("constants", "full", "AffineSubspace", "Ball", "Box", "HalfSpace",
               "IsotonicCone", "ConvexRegression1D", "LipschitzBall", "BallRestriction")

DEFAULTS: Dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "noise": {"kind": "GaussianIsotropic", "sigma": 1.0},
    "design": {"type": "grid", "n": 64},
    "fstar": {"type": "zero"},
    "replicates": {"R": 2000, "R_X": 200, "R_xi": 100, "m": 4096, "bootstrap": 200},
    "seed": 0,
    "tol": 1e-8,
    "workers": 1,
    "deterministic": True,
    "output": {"dir": "out", "format": "json"},
    "params": {},
}

# keys that do not change results and are left out of the hash
_UNHASHED = ("workers", "output")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _plain(obj):
    """JSON-compatible copy (tuples to lists, numpy scalars to Python)."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class ExperimentConfig:
    experiment: str
    class_spec: Optional[dict]
    noise: dict = field(default_factory=lambda: dict(DEFAULTS["noise"]))
    design: dict = field(default_factory=lambda: dict(DEFAULTS["design"]))
    fstar: dict = field(default_factory=lambda: dict(DEFAULTS["fstar"]))
    replicates: dict = field(default_factory=lambda: dict(DEFAULTS["replicates"]))
    seed: int = 0
    tol: float = 1e-8
    workers: int = 1
    deterministic: bool = True
    output: dict = field(default_factory=lambda: dict(DEFAULTS["output"]))
    params: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    # -- serialization -------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigInvalid("<root>", "configuration must be a mapping")
        raw = _plain(raw)
        unknown = set(raw) - set(DEFAULTS) - {"experiment", "class"}
        if unknown:
            raise ConfigInvalid(sorted(unknown)[0], "unknown field")
        if "experiment" not in raw:
            raise ConfigInvalid("experiment", "required")
        d = _merge(DEFAULTS, raw)
        if isinstance(d["noise"], dict):
            d["noise"]["kind"] = _ALIASES.get(d["noise"].get("kind"), d["noise"].get("kind"))
        cfg = cls(
            experiment=d["experiment"], class_spec=d.get("class"), noise=d["noise"],
            design=d["design"], fstar=d["fstar"], replicates=d["replicates"], seed=d["seed"],
            tol=d["tol"], workers=d["workers"], deterministic=d["deterministic"],
            output=d["output"], params=d["params"], schema_version=d["schema_version"],
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = {
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "class": copy.deepcopy(self.class_spec),
            "noise": copy.deepcopy(self.noise),
            "design": copy.deepcopy(self.design),
            "fstar": copy.deepcopy(self.fstar),
            "replicates": copy.deepcopy(self.replicates),
            "seed": self.seed,
            "tol": self.tol,
            "workers": self.workers,
            "deterministic": self.deterministic,
            "output": copy.deepcopy(self.output),
            "params": copy.deepcopy(self.params),
        }
        if d["class"] is None:
            del d["class"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def hash(self) -> str:
        """sha256 of the canonical JSON form, ignoring execution-only fields."""
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        text = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=True)
        return hashlib.sha256(text.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        for k, v in kw.items():
            if v is None:
                continue
            if k == "out":
                d["output"]["dir"] = v
            elif k == "format":
                d["output"]["format"] = v
            else:
                d[k] = v
        return ExperimentConfig.from_dict(d)

    # -- validation ----------------------------------------------------------
    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigInvalid("schema_version", f"expected {SCHEMA_VERSION}, got {self.schema_version!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigInvalid("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if self.class_spec is None:
            if self.experiment != "counterexample":
                raise ConfigInvalid("class", "required")
        else:
            _check_class(self.class_spec, "class")
        _check_int(self.seed, "seed", minimum=0)
        _check_int(self.workers, "workers", minimum=1)
        if not isinstance(self.deterministic, bool):
            raise ConfigInvalid("deterministic", "must be a boolean")
        _check_pos(self.tol, "tol")
        for key, value in self.replicates.items():
            _check_int(value, f"replicates.{key}", minimum=1)
        kind = self.noise.get("kind")
        try:
            NoiseModel(kind, self.noise.get("sigma", 1.0))
        except (ValueError, TypeError) as exc:
            raise ConfigInvalid("noise", str(exc)) from None
        _check_design(self.design)
        _check_fstar(self.fstar)
        fmt = self.output.get("format")
        if fmt not in ("json", "csv"):
            raise ConfigInvalid("output.format", "must be json or csv")
        if not isinstance(self.output.get("dir"), str):
            raise ConfigInvalid("output.dir", "must be a path string")
        if not isinstance(self.params, dict):
            raise ConfigInvalid("params", "must be a mapping")

    # -- builders ------------------------------------------------------------
    def noise_model(self) -> NoiseModel:
        return NoiseModel(self.noise.get("kind", "GaussianIsotropic"), float(self.noise.get("sigma", 1.0)))

    def sampler(self) -> Optional[PopulationSampler]:
        if self.design.get("type") != "sampler":
            return None
        return PopulationSampler(
            distribution=self.design.get("distribution", "uniform"), d=int(self.design.get("d", 1)),
            lo=float(self.design.get("lo", 0.0)), hi=float(self.design.get("hi", 1.0)),
        )

    def n(self) -> int:
        if self.design.get("type") == "points":
            return len(self.design["points"])
        return int(self.design.get("n", 64))

    def design_set(self, n: Optional[int] = None) -> DesignSet:
        t = self.design.get("type")
        if t == "points":
            return DesignSet(np.asarray(self.design["points"], dtype=float),
                             metric=self.design.get("metric", "euclidean"))
        if t == "grid":
            return DesignSet.grid(n or self.n(), float(self.design.get("lo", 0.0)),
                                  float(self.design.get("hi", 1.0)))
        raise ConfigInvalid("design.type", "a fixed design needs type grid or points")

    def build_class(self, design: DesignSet) -> FunctionClass:
        return build_class(self.class_spec, design)

    def fstar_values(self, cls: FunctionClass) -> np.ndarray:
        return fstar_rule(self.fstar)(cls.design.points if cls.design is not None else None, cls.n)


# -- helpers ---------------------------------------------------------------
def _check_int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigInvalid(name, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigInvalid(name, f"must be >= {minimum}, got {value}")


def _check_pos(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0 \
            or not math.isfinite(value):
        raise ConfigInvalid(name, f"must be a positive finite number, got {value!r}")


def _check_class(spec, where):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigInvalid(where, "must be a mapping with a 'kind'")
    if spec["kind"] not in CLASS_KINDS:
        raise ConfigInvalid(f"{where}.kind", f"must be one of {', '.join(CLASS_KINDS)}")
    if spec["kind"] == "BallRestriction":
        _check_class(spec.get("inner"), f"{where}.inner")
    if "bounds" in spec and spec["bounds"] is not None:
        b = spec["bounds"]
        if not (isinstance(b, list) and len(b) == 2 and b[0] <= b[1]):
            raise ConfigInvalid(f"{where}.bounds", "must be [lo, hi] with lo <= hi")
    for key in ("radius", "L"):
        if key in spec and (not isinstance(spec[key], (int, float)) or spec[key] < 0):
            raise ConfigInvalid(f"{where}.{key}", "must be a nonnegative number")


def _check_design(design):
    t = design.get("type")
    if t == "grid":
        _check_int(design.get("n"), "design.n", minimum=1)
    elif t == "points":
        pts = design.get("points")
        if not isinstance(pts, list) or not pts:
            raise ConfigInvalid("design.points", "must be a nonempty list")
    elif t == "sampler":
        _check_int(design.get("n"), "design.n", minimum=1)
        if design.get("distribution", "uniform") not in ("uniform", "gaussian", "sphere"):
            raise ConfigInvalid("design.distribution", "must be uniform, gaussian or sphere")
        _check_int(design.get("d", 1), "design.d", minimum=1)
    else:
        raise ConfigInvalid("design.type", "must be grid, points or sampler")


def _check_fstar(spec):
    t = spec.get("type")
    if t not in ("zero", "constant", "linear", "values"):
        raise ConfigInvalid("fstar.type", "must be zero, constant, linear or values")
    if t == "values" and not isinstance(spec.get("values"), list):
        raise ConfigInvalid("fstar.values", "must be a list")


def _bounds(spec):
    b = spec.get("bounds")
    return None if b is None else (float(b[0]), float(b[1]))


def build_class(spec: dict, design: DesignSet) -> FunctionClass:
    """Instantiate a class from its mapping form on the given design."""
    kind = spec["kind"]
    n = design.n
    try:
        if kind == "constants":
            return constants(design, bounds=_bounds(spec))
        if kind == "full":
            return AffineSubspace(design, basis="full")
        if kind == "AffineSubspace":
            return AffineSubspace(design, basis=spec.get("basis", "constant"), bounds=_bounds(spec))
        if kind == "Ball":
            center = spec.get("center")
            return Ball(n, radius=float(spec.get("radius", 1.0)),
                        center=None if center is None else np.broadcast_to(center, (n,)),
                        norm=spec.get("norm", "euclidean"), design=design)
        if kind == "Box":
            return Box(n, float(spec.get("lower", 0.0)), float(spec.get("upper", 1.0)), design=design)
        if kind == "HalfSpace":
            normal = spec.get("normal")
            return HalfSpace(n, normal=None if normal is None else np.asarray(normal, dtype=float),
                             offset=float(spec.get("offset", 0.0)), design=design)
        if kind == "IsotonicCone":
            return IsotonicCone(design, bounds=_bounds(spec), method=spec.get("method", "ldp"))
        if kind == "ConvexRegression1D":
            return ConvexRegression1D(design, bounds=_bounds(spec))
        if kind == "LipschitzBall":
            return LipschitzBall(design, L=float(spec.get("L", 1.0)), bound=spec.get("bound", 1.0),
                                 method=spec.get("method", "ldp"))
        if kind == "BallRestriction":
            inner = build_class(spec["inner"], design)
            center = spec.get("center", 0.0)
            return BallRestriction(inner, np.broadcast_to(np.asarray(center, dtype=float), (n,)).copy(),
                                   float(spec.get("radius", 1.0)), norm=spec.get("norm", "euclidean"))
    except ConfigInvalid:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid("class", str(exc)) from None
    raise ConfigInvalid("class.kind", f"unknown kind {kind!r}")


def fstar_rule(spec: dict):
    """``(points or None, n) -> values`` for the configured regression function."""
    t = spec.get("type", "zero")

    def rule(points, n):
        if t == "zero":
            return np.zeros(n)
        if t == "constant":
            return np.full(n, float(spec.get("value", 0.0)))
        if t == "linear":
            if points is None:
                raise ConfigInvalid("fstar", "a linear fstar needs a design")
            slope = np.broadcast_to(np.asarray(spec.get("slope", 1.0), dtype=float), (points.shape[1],))
            return float(spec.get("intercept", 0.0)) + points @ slope
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (n,):
            raise ConfigInvalid("fstar.values", f"expected {n} values, got {vals.size}")
        return vals

    return rule


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(str(path), exc.strerror or str(exc)) from None
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigInvalid("<file>", f"cannot parse {path}: {exc}") from None
    return ExperimentConfig.from_dict(raw or {})


__all__ = ["ExperimentConfig", "load_config", "build_class", "fstar_rule", "DEFAULTS",
           "EXPERIMENTS", "CLASS_KINDS", "SCHEMA_VERSION", "NOISE_KINDS"]
