"""Population-size estimation from multiple incomplete sources.

Log-linear multiple-systems estimation with a family of finite-sample
bias-corrected estimators, a scenario generator and a Monte Carlo harness.
"""

from .adjust import (
    Estimator,
    RankDeficientDesignError,
    ZVector,
    adjusted_counts,
    chapman_adjusted_counts,
    estimator_supported,
    z_vector,
)
from .approx import ApproxReport, BiasIdentityReport, compare_expansions, taylor_bias_identity_check
from .estimators import EstimateResult, Status, closed_form_m000, estimate, regularity_check
from .glm import FitResult, MarginZeroError, fienberg_m000, fit_firth, fit_ml
from .harness import SimSummary, apply_failure_policy, reference_estimator, run_study, t_test_vs_N
from .patterns import (
    CountTable,
    InclusionPattern,
    ModelSpec,
    build_design,
    canonical_patterns,
    marginal,
    parse_model,
    pattern_index,
)
from .scenarios import (
    CellProbabilities,
    DSE_SCENARIOS,
    MSE_SCENARIOS,
    ScenarioSolveError,
    ScenarioSpec,
    builtin_bundle,
    load_scenarios,
    replication_rng,
    sample_table,
    solve_cell_probabilities,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxReport",
    "BiasIdentityReport",
    "CellProbabilities",
    "CountTable",
    "DSE_SCENARIOS",
    "EstimateResult",
    "Estimator",
    "FitResult",
    "InclusionPattern",
    "MSE_SCENARIOS",
    "MarginZeroError",
    "ModelSpec",
    "RankDeficientDesignError",
    "ScenarioSolveError",
    "ScenarioSpec",
    "SimSummary",
    "Status",
    "ZVector",
    "adjusted_counts",
    "apply_failure_policy",
    "build_design",
    "builtin_bundle",
    "canonical_patterns",
    "chapman_adjusted_counts",
    "closed_form_m000",
    "compare_expansions",
    "estimate",
    "estimator_supported",
    "fienberg_m000",
    "fit_firth",
    "fit_ml",
    "load_scenarios",
    "marginal",
    "parse_model",
    "pattern_index",
    "reference_estimator",
    "regularity_check",
    "replication_rng",
    "run_study",
    "sample_table",
    "solve_cell_probabilities",
    "t_test_vs_N",
    "taylor_bias_identity_check",
    "z_vector",
]
