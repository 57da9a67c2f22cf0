"""Command-line entry point: ``ermlab <experiment> --config FILE [options]``."""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from ._version import __version__
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import ConfigInvalid, ErmLabError, IoFailure, NonConvergence, SolverFailure
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

_HELP = {
    "project": "project one observation vector onto the class",
    "decompose": "Monte Carlo risk / variance / bias decomposition",
    "rate-scan": "decompositions over a grid of sample sizes with exponent fits",
    "geometry": "balancing points from an entropy curve and isometry remainders",
    "stability": "approximate-minimizer diameter and stability radii",
    "jagged": "lower-tail probe of the fit error",
    "fixed-point": "search for a regression function where the fit is unbiased",
    "counterexample": "half-space and finite-field demonstrations",
}


def _common(default=None) -> argparse.ArgumentParser:
    # subcommand copies use SUPPRESS so they do not reset options given earlier
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    g = p.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="YAML or JSON experiment file")
    g.add_argument("--seed", type=int, metavar="U64", help="override the base seed")
    g.add_argument("--workers", type=int, metavar="N", help="worker processes for replicates")
    g.add_argument("--deterministic", action="store_true",
                   help="ordered reductions and byte-identical reports")
    g.add_argument("--out", metavar="DIR", help="output directory")
    g.add_argument("--format", choices=("json", "csv"), help="report format")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    sub_common = _common(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="ermlab", parents=[common],
                                     description="Least-squares estimator experiments.")
    parser.add_argument("--version", action="version", version=f"ermlab {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[sub_common], help=_HELP[name], description=_HELP[name])
    return parser


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigInvalid("experiment",
                                f"file declares {cfg.experiment!r} but {args.experiment!r} was requested")
    else:
        cfg = ExperimentConfig.from_dict({"experiment": args.experiment})
    return cfg.with_overrides(seed=args.seed, workers=args.workers, out=args.out,
                              format=args.format,
                              deterministic=True if args.deterministic else None)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        outcome = run_experiment(cfg)
    except ConfigInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, NonConvergence) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except IoFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ErmLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in outcome.paths:
        print(path)
    return outcome.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
