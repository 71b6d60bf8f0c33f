"""Estimate treatment effects from a costly stochastic simulator under a replication budget."""

from .alloc import (
    AllocationConfig,
    AllocationTrace,
    ConditionResult,
    Status,
    StrategyReport,
    TraceRecord,
    run_brute_force,
    run_greedy,
    run_model_greedy,
    select_max_ci,
)
from .sim import (
    FactorGrid,
    GaussianSimulator,
    OUDSimulator,
    SimOutcome,
    SimParams,
    Simulator,
    TreatmentCondition,
    build_grid,
    condition_params,
    expected_outcome,
    linear_truth,
    simulate_replication,
)
from .stats import (
    ConditionEstimate,
    InsufficientDataError,
    RegressionModel,
    SingularDesignError,
    ci_width,
    fit_ols,
    fit_ols_grouped,
    predict_with_ci,
    update_stats,
)

__version__ = "0.1.0"
