"""Exact small-scale counterexamples.

* A half-space, where near-minimizer sets are full balls and do not shrink.
* A finite-field model where no estimator that ignores the covariate law can
  be accurate under every member of a family of laws.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .classes import HalfSpace
from .erm import NoiseModel, generate_noise, solve_erm
from .errors import FieldTooLarge
from .stability import o_delta_diameter


# -- half-space -------------------------------------------------------------------
@dataclass
class HalfSpaceRow:
    delta: float
    diameter: float
    se: float
    predicted: float
    rel_dev: float
    replicates: int

    def to_dict(self):
        return dict(self.__dict__)


def halfspace_stability_demo(
    n: int,
    delta_grid: Sequence[float],
    model: Optional[NoiseModel] = None,
    R: int = 50,
    seed: int = 0,
    directions: int = 64,
    condition: str = "interior",
) -> list:
    """Mean near-minimizer diameter on ``{v : v_1 >= 0}`` with the truth on its boundary.

    Replicates are kept when the first observation is inside the half-space
    (``condition="interior"``) or outside it (``"exterior"``); in both cases
    the set is a ball of empirical radius sqrt(delta) cut by a hyperplane
    through or beyond its center, so its diameter is 2 sqrt(delta).
    """
    model = NoiseModel() if model is None else model
    if model.kind != "GaussianIsotropic":
        raise ValueError("the half-space demo uses Gaussian noise")
    if condition not in ("interior", "exterior"):
        raise ValueError("condition must be 'interior' or 'exterior'")
    cls = HalfSpace(n)
    fstar = np.zeros(n)
    sols = []
    r = 0
    while len(sols) < R:
        xi = generate_noise(model, n, seed + r)
        r += 1
        if (xi[0] > 0) == (condition == "interior"):
            sols.append(solve_erm(cls, fstar, xi, probes=False))
        if r > 100 * R + 100:
            raise RuntimeError("too few replicates satisfy the conditioning event")
    rows = []
    for delta in delta_grid:
        ds = np.array([o_delta_diameter(cls, s, delta, directions, seed + k)
                       for k, s in enumerate(sols)])
        pred = 2.0 * np.sqrt(delta)
        mean = float(ds.mean())
        rows.append(HalfSpaceRow(
            delta=float(delta), diameter=mean,
            se=float(ds.std(ddof=1) / np.sqrt(len(ds))) if len(ds) > 1 else 0.0,
            predicted=float(pred),
            rel_dev=float(abs(mean - pred) / pred) if pred > 0 else float(abs(mean)),
            replicates=len(ds),
        ))
    return rows


# -- finite field -------------------------------------------------------------------
def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    return all(q % k for k in range(2, int(q**0.5) + 1))


Func = Tuple[str, int]  # ("ind", H) is 1_H, ("co", H) is 1 - 1_H


class FiniteFieldModel:
    """Nonzero vectors of F_q^(n+1), hyperplanes through the origin and their indicators."""

    def __init__(self, q: int, n: int):
        if not _is_prime(q):
            raise ValueError("q must be prime")
        if n < 1 or q <= n:
            raise ValueError("need 1 <= n < q")
        self.q, self.n = q, n
        self.dim = n + 1
        grid = np.array(list(itertools.product(range(q), repeat=self.dim)), dtype=np.int64)
        self.points = grid[1:]  # drop the zero vector
        first_nz = np.argmax(self.points != 0, axis=1)
        self.normals = self.points[self.points[np.arange(len(self.points)), first_nz] == 1]
        self.member = (self.normals @ self.points.T) % q == 0  # (H, points)
        self.functions = [("ind", h) for h in range(self.H)] + [("co", h) for h in range(self.H)]
        self._index = {f: i for i, f in enumerate(self.functions)}
        ind = self.member.astype(np.int64)
        self.values = np.vstack([ind, 1 - ind])  # (functions, points)

    @property
    def H(self) -> int:
        return self.normals.shape[0]

    def expected_hyperplanes(self) -> int:
        return (self.q ** self.dim - 1) // (self.q - 1)

    def support(self, dist: Union[str, int]) -> np.ndarray:
        """Point indices carrying the law: ``"P"`` or a hyperplane index."""
        if dist == "P":
            return np.arange(len(self.points))
        return np.nonzero(self.member[dist])[0]

    def span(self, tup) -> Optional[int]:
        """The unique hyperplane containing all points, when the points span one."""
        hits = np.nonzero(self.member[:, list(tup)].all(axis=1))[0]
        return int(hits[0]) if len(hits) == 1 else None

    def value(self, f: Func, tup) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.values[self._index[f], list(tup)])

    def index(self, f: Func) -> int:
        return self._index[f]


RuleFn = Callable[[FiniteFieldModel, tuple, tuple, Optional[int]], Func]


def _first_consistent(model: FiniteFieldModel, tup, labels) -> Func:
    vals = model.values[:, list(tup)]
    ok = np.nonzero((vals == np.array(labels)).all(axis=1))[0]
    return model.functions[ok[0]] if len(ok) else ("ind", 0)


def _avoiding(model: FiniteFieldModel, tup) -> Optional[int]:
    clear = np.nonzero(~model.member[:, list(tup)].any(axis=1))[0]
    return int(clear[0]) if len(clear) else None


def trust_span(model, tup, labels, span):
    """Generalize according to the hyperplane spanned by the sample."""
    if span is not None and all(l == 1 for l in labels):
        return ("ind", span)
    if span is not None and all(l == 0 for l in labels):
        return ("co", span)
    return _first_consistent(model, tup, labels)


def distrust_span(model, tup, labels, span):
    """Generalize as if the sample were spread over the whole space."""
    h = _avoiding(model, tup)
    if h is not None and all(l == 1 for l in labels):
        return ("co", h)
    if h is not None and all(l == 0 for l in labels):
        return ("ind", h)
    return _first_consistent(model, tup, labels)


RULES: Dict[str, RuleFn] = {"trust_span": trust_span, "distrust_span": distrust_span}


@dataclass
class FiniteFieldResult:
    q: int
    n: int
    hyperplanes: int
    exact: bool
    risk: Dict[Tuple[Func, str], object]  # (fstar, "P" | "H<k>") -> risk
    p0: object
    p1: object
    pH0: list
    pH1: list
    p0_full: object  # conditioned on the sample spanning a hyperplane
    p1_full: object
    pH0_full: list
    pH1_full: list
    du_lower_bound: object
    scenario_span_law: object  # mean over H of the risk of 1_H under the law on H
    scenario_full_law: object  # risk of 1 - 1_{H_0} under the uniform law
    formula_deviation: dict = field(default_factory=dict)

    @staticmethod
    def _mean(xs):
        return sum(xs, Fraction(0)) / len(xs) if isinstance(xs[0], Fraction) else float(np.mean(xs))

    def fubini(self, conditional: bool = True) -> dict:
        if conditional:
            p = (self.p0_full, self.p1_full)
            ph = (self.pH0_full, self.pH1_full)
        else:
            p = (self.p0, self.p1)
            ph = (self.pH0, self.pH1)
        avg = (self._mean(ph[0]), self._mean(ph[1]))
        return {"p0": p[0], "p1": p[1], "mean_pH0": avg[0], "mean_pH1": avg[1],
                "equal": bool(p[0] == avg[0] and p[1] == avg[1])}

    def risk_rows(self):
        """(fstar_id, distribution_id, risk) rows."""
        return [(f"{f[0]}_{f[1]}", d, float(v)) for (f, d), v in sorted(self.risk.items())]

    def to_dict(self):
        num = float
        return {
            "q": self.q,
            "n": self.n,
            "hyperplanes": self.hyperplanes,
            "exact": self.exact,
            "p0": num(self.p0),
            "p1": num(self.p1),
            "p0_full": num(self.p0_full),
            "p1_full": num(self.p1_full),
            "fubini_conditional": {k: (v if isinstance(v, bool) else num(v))
                                   for k, v in self.fubini(True).items()},
            "fubini_unconditional": {k: (v if isinstance(v, bool) else num(v))
                                     for k, v in self.fubini(False).items()},
            "du_lower_bound": num(self.du_lower_bound),
            "scenario_span_law": num(self.scenario_span_law),
            "scenario_full_law": num(self.scenario_full_law),
            "formula_deviation": {k: num(v) for k, v in self.formula_deviation.items()},
        }


def _tuples(model: FiniteFieldModel, support: np.ndarray, exact: bool, samples: int, rng):
    if exact:
        return itertools.product(support.tolist(), repeat=model.n), len(support) ** model.n
    draws = rng.choice(support, size=(samples, model.n))
    return (tuple(int(v) for v in row) for row in draws), samples


def finite_field_demo(
    q: int,
    n: int,
    estimator_rule: Union[str, RuleFn] = "trust_span",
    budget: int = 10**6,
    allow_sampling: bool = False,
    samples: int = 20_000,
    seed: int = 0,
) -> FiniteFieldResult:
    """Risk tables of a noiseless estimator rule under the uniform law and each hyperplane law.

    Exact rational arithmetic is used when the number of samples to enumerate
    (``(q^(n+1) - 1)^n``) is within ``budget``; otherwise seeded sampling is used
    if allowed and ``FieldTooLarge`` is raised if not.
    """
    rule = RULES[estimator_rule] if isinstance(estimator_rule, str) else estimator_rule
    total = (q ** (n + 1) - 1) ** n
    exact = total <= budget
    if not exact and not allow_sampling:
        raise FieldTooLarge(f"{total} samples exceed the enumeration budget {budget}")
    model = FiniteFieldModel(q, n)
    rng = np.random.default_rng(seed)
    F = model.values
    nf = len(model.functions)
    cache: dict = {}

    def output(tup, labels, span):
        key = (tup, labels)
        hit = cache.get(key)
        if hit is None:
            hit = model.index(rule(model, tup, labels, span))
            cache[key] = hit
        return hit

    def run(dist):
        """Risk per fstar under one law, plus the two event frequencies."""
        supp = model.support(dist)
        Fs = F[:, supp]
        diff = Fs @ (1 - Fs).T + (1 - Fs) @ Fs.T  # disagreement counts on the support
        tuples, count = _tuples(model, supp, exact, samples, rng)
        err = np.zeros(nf, dtype=np.int64)
        ev = {"p0": 0, "p1": 0, "full": 0}
        for tup in tuples:
            span = model.span(tup)
            labels_all = F[:, list(tup)]
            for i in range(nf):
                err[i] += diff[i, output(tup, tuple(int(v) for v in labels_all[i]), span)]
            ones, zeros = (1,) * n, (0,) * n
            target = span if dist == "P" else dist
            hit1 = span is not None and span == target and \
                model.functions[output(tup, ones, span)] == ("ind", target)
            hit0 = span is not None and span == target and \
                model.functions[output(tup, zeros, span)] == ("co", target)
            ev["p1"] += hit1
            ev["p0"] += hit0
            ev["full"] += span is not None and span == target

        def frac(a, b):
            return Fraction(int(a), int(b)) if exact else a / b
        risks = [frac(e, count * len(supp)) for e in err]
        probs = {k: frac(ev[k], count) for k in ("p0", "p1")}
        full = max(ev["full"], 1)
        probs.update({f"{k}_full": frac(ev[k], full) for k in ("p0", "p1")})
        return risks, probs

    risk: dict = {}
    rP, probsP = run("P")
    for i, f in enumerate(model.functions):
        risk[(f, "P")] = rP[i]
    pH0, pH1, pH0f, pH1f = [], [], [], []
    per_H = []
    for h in range(model.H):
        rH, probsH = run(h)
        per_H.append(rH)
        for i, f in enumerate(model.functions):
            risk[(f, f"H{h}")] = rH[i]
        pH0.append(probsH["p0"])
        pH1.append(probsH["p1"])
        pH0f.append(probsH["p0_full"])
        pH1f.append(probsH["p1_full"])

    p1 = probsP["p1"]
    du = max(p1, 1 - p1)
    span_law = sum((per_H[h][model.index(("ind", h))] for h in range(model.H)),
                   Fraction(0) if exact else 0.0) / model.H
    full_law = risk[(("co", 0), "P")]

    # case predictions: under the law on H, fstar in {1 - 1_H} u {1_H'} -> pH0,
    # fstar in {1_H} u {1 - 1_H'} -> pH1; under the uniform law 1_H -> 1 - p0,
    # 1 - 1_H -> 1 - p1. "complemented" swaps p <-> 1 - p in the hyperplane cases.
    dev_printed = dev_comp = 0
    for h in range(model.H):
        for f in model.functions:
            kind, g = f
            group0 = (kind == "co" and g == h) or (kind == "ind" and g != h)
            pred = pH0[h] if group0 else pH1[h]
            val = risk[(f, f"H{h}")]
            dev_printed = max(dev_printed, abs(val - pred))
            dev_comp = max(dev_comp, abs(val - (1 - pred)))
    dev_P = 0
    for f in model.functions:
        pred = 1 - probsP["p0"] if f[0] == "ind" else 1 - p1
        dev_P = max(dev_P, abs(risk[(f, "P")] - pred))

    return FiniteFieldResult(
        q=q, n=n, hyperplanes=model.H, exact=exact, risk=risk,
        p0=probsP["p0"], p1=p1, pH0=pH0, pH1=pH1,
        p0_full=probsP["p0_full"], p1_full=probsP["p1_full"], pH0_full=pH0f, pH1_full=pH1f,
        du_lower_bound=du, scenario_span_law=span_law, scenario_full_law=full_law,
        formula_deviation={"hyperplane_as_printed": dev_printed,
                           "hyperplane_complemented": dev_comp,
                           "uniform_law": dev_P},
    )
