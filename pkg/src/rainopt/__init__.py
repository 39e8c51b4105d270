"""rainopt: recursive-anchoring solvers for stochastic minimax problems.

The package finds near-stationary points (small gradient-operator norm) of
smooth saddle-point problems from noisy first-order information.  It ships

* affine test problems with exactly known constants and solutions,
* a counted, reproducible stochastic oracle,
* the solver stack seg / epoch_seg / rain / rain_cc,
* closed-form references and inequality validators, and
* a config-driven Monte-Carlo experiment harness with CSV output.
"""

__version__ = "0.1.0"

from .problems import (
    AffineMinimaxProblem,
    AnchoredProblem,
    Point,
    anchor_push,
    gen_bilinear,
    gen_scsc_quadratic,
    grad_norm,
    load_problem,
    op_eval,
    save_problem,
)
from .oracle import (
    NoiseModel,
    StochasticOracle,
    oracle_eval,
    sfo_count,
    split_stream,
)
from .solvers import (
    RainSchedule,
    RunTrace,
    TraceRecord,
    check_stationary,
    epoch_seg,
    rain,
    rain_cc,
    rain_schedule,
    seg,
)
from .reference import (
    ReferenceSolution,
    anchored_exact,
    collapse_affine,
    exact_saddle,
    reference_seg,
    verify_anchoring_bound,
    verify_monotonicity,
    verify_nonexpansiveness,
    verify_recursive_bound,
)
from .harness import (
    AggregateResult,
    ExperimentConfig,
    parse_config,
    parse_config_file,
    run_checks,
    run_experiment,
)

__all__ = [
    "__version__",
    "AffineMinimaxProblem",
    "AnchoredProblem",
    "Point",
    "anchor_push",
    "gen_bilinear",
    "gen_scsc_quadratic",
    "grad_norm",
    "load_problem",
    "op_eval",
    "save_problem",
    "NoiseModel",
    "StochasticOracle",
    "oracle_eval",
    "sfo_count",
    "split_stream",
    "RainSchedule",
    "RunTrace",
    "TraceRecord",
    "check_stationary",
    "epoch_seg",
    "rain",
    "rain_cc",
    "rain_schedule",
    "seg",
    "ReferenceSolution",
    "anchored_exact",
    "collapse_affine",
    "exact_saddle",
    "reference_seg",
    "verify_anchoring_bound",
    "verify_monotonicity",
    "verify_nonexpansiveness",
    "verify_recursive_bound",
    "AggregateResult",
    "ExperimentConfig",
    "parse_config",
    "parse_config_file",
    "run_checks",
    "run_experiment",
]
