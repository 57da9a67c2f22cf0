"""Orchestration: turn a validated configuration into a report."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import ExperimentConfig, fstar_rule
from .counterexamples import RULES, finite_field_demo, halfspace_stability_demo
from .decomposition import (
    SCAN_COLUMNS, fixed_design_decomposition, random_design_decomposition, rate_scan, scan_rows,
)
from .design import derive_seed
from .erm import generate_noise, solve_erm
from .errors import ConfigInvalid, ErmLabError
from .fitting import fit_exponent
from .geometry import (
    EntropyCurve, empirical_entropy_curve, generalization_diameter, geometry_report,
    isometry_remainders,
)
from .io import envelope, write_report
from .stability import (
    StabilityConfig, estimate_rho_O, estimate_rho_S, fixed_point_search, jagged_probe,
    o_delta_probe,
)


@dataclass
class RunOutcome:
    report: dict
    paths: List[Path] = field(default_factory=list)
    exit_code: int = 0


def _p(cfg: ExperimentConfig, key, default):
    return cfg.params.get(key, default)


def _rep(cfg: ExperimentConfig, key):
    return int(cfg.replicates[key])


def _decomp_table(reports) -> dict:
    return {"columns": list(SCAN_COLUMNS), "rows": scan_rows(reports)}


def _fixed_setup(cfg: ExperimentConfig, n: Optional[int] = None):
    design = cfg.design_set(n)
    cls = cfg.build_class(design)
    fstar = fstar_rule(cfg.fstar)(design.points, design.n)
    return design, cls, fstar


def _population_rule(cfg: ExperimentConfig):
    rule = fstar_rule(cfg.fstar)
    return lambda pts: rule(pts, pts.shape[0])


def _family(cfg: ExperimentConfig):
    sampler = cfg.sampler()
    design = sampler.design(cfg.n(), derive_seed(cfg.seed, 99))
    return sampler, cfg.build_class(design)


# -- experiments -----------------------------------------------------------------
def _run_project(cfg):
    design, cls, fstar = _fixed_setup(cfg)
    target = cfg.params.get("target")
    if target is None:
        y = fstar + generate_noise(cfg.noise_model(), cls.n, cfg.seed)
    else:
        y = np.asarray(target, dtype=float)
        if y.shape != (cls.n,):
            raise ConfigInvalid("params.target", f"expected {cls.n} values")
    sol = solve_erm(cls, fstar, y - fstar, tol=cfg.tol, seed=cfg.seed)
    result = {"y": y.tolist(), "fhat": sol.fhat.tolist(), "violation": cls.violation(sol.fhat),
              "kkt_gap": sol.kkt_gap, "loss": sol.loss, "class": cls.describe()}
    table = {"columns": ["i", "y", "fhat"],
             "rows": [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(y, sol.fhat))]}
    return result, table


def _run_decompose(cfg):
    model = cfg.noise_model()
    if cfg.design.get("type") == "sampler":
        sampler, family = _family(cfg)
        rep = random_design_decomposition(
            family, sampler, _population_rule(cfg), model, cfg.n(), R_X=_rep(cfg, "R_X"),
            R_xi=_rep(cfg, "R_xi"), m=_rep(cfg, "m"), seed=cfg.seed, tol=cfg.tol,
            workers=cfg.workers, bootstrap=_rep(cfg, "bootstrap"))
    else:
        _, cls, fstar = _fixed_setup(cfg)
        rep = fixed_design_decomposition(cls, fstar, model, R=_rep(cfg, "R"), seed=cfg.seed,
                                         tol=cfg.tol, workers=cfg.workers)
    gap, gap_se = rep.risk_gap()
    tgap, tgap_se = rep.total_variance_gap()
    result = {**rep.to_dict(), "risk_gap": gap, "risk_gap_se": gap_se,
              "total_variance_gap": tgap, "total_variance_gap_se": tgap_se,
              "identities_hold": rep.identities_hold()}
    return result, _decomp_table([(rep.n, rep)])


def _run_rate_scan(cfg):
    if cfg.design.get("type") == "points":
        raise ConfigInvalid("design.type", "a rate scan needs a grid design")
    grid = [int(v) for v in _p(cfg, "n_grid", [64, 128, 256, 512])]
    try:
        scan = rate_scan(lambda n: cfg.build_class(cfg.design_set(n)), grid,
                         lambda c: fstar_rule(cfg.fstar)(c.design.points, c.n),
                         cfg.noise_model(), R=_rep(cfg, "R"), seed=cfg.seed, tol=cfg.tol,
                         workers=cfg.workers)
    except ValueError as exc:
        if isinstance(exc, ErmLabError):
            raise
        raise ConfigInvalid("params.n_grid", str(exc)) from None
    fits = {}
    for key in ("variance", "risk", "bias_sq"):
        pairs = [(n, getattr(r, key)) for n, r in scan]
        if all(v > 0 for _, v in pairs):
            fits[key] = fit_exponent(pairs).to_dict()
    result = {"n_grid": grid, "reports": [r.to_dict() for _, r in scan], "fits": fits}
    return result, _decomp_table(scan)


def _curve(cfg, cls=None):
    spec = dict(_p(cfg, "curve", {"form": "power", "exponent": 1.0}))
    form = spec.get("form", "power")
    if form == "power":
        return EntropyCurve.power(float(spec.get("exponent", 1.0)), float(spec.get("scale", 1.0)))
    if form == "log":
        return EntropyCurve.log(float(spec.get("scale", 1.0)))
    if form == "zero":
        return EntropyCurve.zero()
    if form == "empirical":
        if cls is None:
            raise ConfigInvalid("params.curve", "an empirical curve needs a class")
        grid = spec.get("eps_grid", [0.05, 0.1, 0.2, 0.4])
        return empirical_entropy_curve(cls, grid, int(spec.get("pool_size", 512)), cfg.seed)
    raise ConfigInvalid("params.curve.form", "must be power, log, zero or empirical")


def _run_geometry(cfg):
    n = cfg.n()
    sampler = cfg.sampler()
    cls = None
    if sampler is None:
        _, cls, fstar = _fixed_setup(cfg)
    else:
        sampler, cls = _family(cfg)
    curve = _curve(cfg, cls)
    result = {}
    I_L, I_U = float(_p(cfg, "I_L", 0.0)), float(_p(cfg, "I_U", 0.0))
    if sampler is not None and _p(cfg, "estimate_isometry", False):
        iso = isometry_remainders(cls, sampler, n, int(_p(cfg, "pair_count", 256)),
                                  int(_p(cfg, "design_replicates", n)), cfg.seed,
                                  pool_size=int(_p(cfg, "pool_size", 128)), m=_rep(cfg, "m"))
        I_L, I_U = iso.I_L, iso.I_U
        result["isometry"] = iso.to_dict()
    rep = geometry_report(curve, n, I_L, I_U, float(_p(cfg, "c", 1.0)))
    result.update(rep.to_dict())
    if sampler is not None and _p(cfg, "generalization_diameter", False):
        fz = _population_rule(cfg)
        design = cls.design
        result["generalization_diameter"] = generalization_diameter(
            cls, sampler, fz(design.points), n, cfg.seed, design=design,
            m=int(_p(cfg, "diameter_points", 512)))
    table = None
    if curve.source == "empirical":
        table = {"columns": ["eps", "log_count"], "rows": curve.to_rows()}
    return result, table


def _stability_config(cfg):
    keys = ("M", "M_prime", "c_I", "c_2", "probe_directions")
    return StabilityConfig(**{k: cfg.params[k] for k in keys if k in cfg.params})


def _run_stability(cfg):
    model = cfg.noise_model()
    scfg = _stability_config(cfg)
    n = cfg.n()
    eps_star = float(_p(cfg, "eps_star", n ** -0.5))
    delta = float(_p(cfg, "delta", eps_star ** 2))
    result = {"eps_star": eps_star, "delta": delta, "config": scfg.to_dict()}
    sampler = cfg.sampler()
    if sampler is None:
        _, cls, fstar = _fixed_setup(cfg)
        xi = generate_noise(model, cls.n, cfg.seed)
        sol = solve_erm(cls, fstar, xi, tol=cfg.tol, seed=cfg.seed)
        probe = o_delta_probe(cls, sol, delta, scfg.probe_directions, derive_seed(cfg.seed, 70))
        result["o_delta"] = probe.to_dict()
        result["rho_S"] = estimate_rho_S(
            cls, fstar, model, scfg, eps_star, int(_p(cfg, "R_outer", 32)),
            int(_p(cfg, "R_inner", 64)), derive_seed(cfg.seed, 71), tol=cfg.tol).to_dict()
        result["flags"] = [] if cls.diameter_bounded else ["diameter_unbounded"]
    else:
        sampler, family = _family(cfg)
        result["rho_O"] = estimate_rho_O(
            family, sampler, _population_rule(cfg), model, scfg, eps_star,
            int(_p(cfg, "R", 100)), derive_seed(cfg.seed, 72), n, m=_rep(cfg, "m"),
            tol=cfg.tol).to_dict()
    return result, None


def _run_jagged(cfg):
    _, cls, fstar = _fixed_setup(cfg)
    eps = cfg.params.get("eps_star")
    summ = jagged_probe(cls, fstar, cfg.noise_model(), _rep(cfg, "R"), cfg.seed,
                        C=float(_p(cfg, "C", 1.0)), eps_star=None if eps is None else float(eps),
                        tol=cfg.tol)
    table = {"columns": ["replicate", "d", "e"],
             "rows": [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(summ.d, summ.e))]}
    return summ.to_dict(), table


def _run_fixed_point(cfg):
    _, cls, _ = _fixed_setup(cfg)
    eps = cfg.params.get("eps_star")
    res = fixed_point_search(
        cls, cfg.noise_model(), R_inner=int(_p(cfg, "R_inner", 2000)),
        max_iter=int(_p(cfg, "max_iter", 50)), tol_fp=float(_p(cfg, "tol_fp", 1e-2)),
        seed=cfg.seed, R_decomp=_rep(cfg, "R"), eps_star=None if eps is None else float(eps),
        tol=cfg.tol)
    table = {"columns": ["iteration", "residual"],
             "rows": [[i + 1, float(r)] for i, r in enumerate(res.history)]}
    return res.to_dict(), table


def _run_counterexample(cfg):
    which = _p(cfg, "which", "finite_field")
    if which == "finite_field":
        rules = _p(cfg, "rules", ["trust_span", "distrust_span"])
        for r in rules:
            if r not in RULES:
                raise ConfigInvalid("params.rules", f"unknown rule {r!r}")
        q, n = int(_p(cfg, "q", 5)), int(_p(cfg, "n", 2))
        out, rows = {}, []
        for r in rules:
            res = finite_field_demo(q, n, r, budget=int(_p(cfg, "budget", 10 ** 6)),
                                    allow_sampling=bool(_p(cfg, "allow_sampling", False)),
                                    seed=cfg.seed)
            out[r] = res.to_dict()
            rows += [[r, f, d, v] for f, d, v in res.risk_rows()]
        return {"q": q, "n": n, "rules": out}, {"columns": ["rule", "fstar", "law", "risk"], "rows": rows}
    if which == "halfspace":
        delta_grid = [float(v) for v in _p(cfg, "delta_grid", [0.01, 0.04, 0.16])]
        rows = halfspace_stability_demo(
            int(_p(cfg, "n", cfg.n())), delta_grid, cfg.noise_model(), R=_rep(cfg, "R"),
            seed=cfg.seed, directions=int(_p(cfg, "directions", 64)),
            condition=_p(cfg, "condition", "interior"))
        cols = ["delta", "diameter", "se", "predicted", "rel_dev", "replicates"]
        return ({"rows": [r.to_dict() for r in rows]},
                {"columns": cols, "rows": [[getattr(r, c) for c in cols] for r in rows]})
    raise ConfigInvalid("params.which", "must be finite_field or halfspace")


EXPERIMENT_RUNNERS = {
    "project": _run_project,
    "decompose": _run_decompose,
    "rate-scan": _run_rate_scan,
    "geometry": _run_geometry,
    "stability": _run_stability,
    "jagged": _run_jagged,
    "fixed-point": _run_fixed_point,
    "counterexample": _run_counterexample,
}


def build_report(cfg: ExperimentConfig) -> dict:
    """Run the configured experiment and return the report dictionary."""
    cfg.validate()
    result, table = EXPERIMENT_RUNNERS[cfg.experiment](cfg)
    return envelope(cfg.experiment, cfg, result, table)


def run_experiment(cfg: ExperimentConfig, out_dir=None, write: bool = True) -> RunOutcome:
    """Run, then write ``<experiment>.json`` (or ``.csv``) under the output directory.

    Rate scans always also write ``rate-scan.csv``.
    """
    fmt = cfg.output.get("format", "json")
    report = build_report(cfg)
    if fmt == "csv" and "table" not in report:
        raise ConfigInvalid("output.format", f"{cfg.experiment} reports have no CSV table")
    outcome = RunOutcome(report)
    if not write:
        return outcome
    out = Path(out_dir if out_dir is not None else cfg.output["dir"])
    stem = cfg.experiment
    outcome.paths.append(write_report(report, out / f"{stem}.{fmt}", fmt))
    if cfg.experiment == "rate-scan" and fmt == "json":
        outcome.paths.append(write_report(report, out / f"{stem}.csv", "csv"))
    return outcome
