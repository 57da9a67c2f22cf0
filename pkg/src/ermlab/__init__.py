"""Least-squares estimators over convex function classes: projections,
bias-variance decompositions, geometry diagnostics and stability probes."""
from ._version import __version__
from .classes import (
    AffineSubspace, Ball, BallRestriction, Box, ConvexRegression1D, FunctionClass, HalfSpace,
    IsotonicCone, LipschitzBall, constants, full_space, project, restrict_to_ball, singleton,
    violation,
)
from .config import ExperimentConfig, load_config
from .counterexamples import finite_field_demo, halfspace_stability_demo
from .decomposition import (
    DecompositionReport, fixed_design_decomposition, random_design_decomposition, rate_scan,
)
from .design import DesignSet, PopulationSampler, derive_seed, empirical_norm
from .erm import ErmSolution, NoiseModel, generate_noise, in_O_delta, kkt_gap, solve_erm
from .errors import *  # noqa: F401,F403
from .fitting import RateFit, fit_exponent
from .geometry import (
    EntropyCurve, generalization_diameter, geometry_report, greedy_net, isometry_remainders,
    solve_balancing, solve_epsilon_U,
)
from .io import read_report, write_report
from .runner import run_experiment
from .sampling import sample_member, sample_members
from .stability import (
    StabilityConfig, estimate_rho_O, estimate_rho_S, fixed_point_search, jagged_probe,
    o_delta_diameter, o_delta_probe,
)
