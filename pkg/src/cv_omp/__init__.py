"""Sparse recovery with cross-validation stopping.

Library layout:
  problems     sensing problem generation and serialization
  solver       incremental least squares on growing supports
  pursuit      matching pursuit loop, stopping rules, traces
  theory       distributions, intervals, comparison odds, bound constants
  rip          restricted isometry diagnostics
  experiments  Monte Carlo runners behind the CLI
"""

from .problems import (
    GAUSSIAN,
    RADEMACHER,
    MatrixEnsemble,
    ProblemDims,
    SensingProblem,
    SparseSignal,
    draw_signal,
    generate_problem,
    get_ensemble,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    sample_cv_block,
    save_problem,
)
from .solver import (
    DegenerateSupportError,
    GrowingSolve,
    SupportSolve,
    extend_support_solve,
    least_squares_on_support,
    project_orthogonal,
)
from .pursuit import (
    IterationRecord,
    OmpTrace,
    StoppingRule,
    cv_residuals,
    estimate_noise_power,
    omp_step,
    run_omp,
    run_omp_cv,
    trace_to_csv,
)
from .theory import (
    DegenerateDistributionError,
    EstimationInterval,
    GaussianApprox,
    GeneralizedErrorPair,
    InfeasibleConfidenceError,
    RicBoundConstants,
    UndefinedBoundError,
    UndefinedCorrelationError,
    block_correction_bound,
    comparison_success,
    correlation_floor,
    cv_diff_distribution,
    cv_residual_distribution,
    erf,
    erfc,
    estimation_interval,
    generalized_cv_diff_distribution,
    generalized_cv_distribution,
    generalized_error_pair,
    interval_scale_factors,
    min_ratio_for_confidence,
    phi,
    ric_bound_constants,
    separation_z,
    worst_ratio_bound,
)
from .rip import (
    CorrectionCheckResult,
    ExhaustiveCapError,
    RicEstimate,
    check_correction_bound,
    check_ric_consequences,
    delta_map,
    estimate_ric,
    ric_profile,
)
from .experiments import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    ExperimentResult,
    default_config,
    run_experiment,
    validate_config,
)

__version__ = "0.1.0"
