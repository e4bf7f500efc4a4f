"""Optimal sensor scheduling for Kalman filtering."""

from .baselines import brute_force, enumerate_feasible, greedy
from .covariance import (
    CovarianceCache,
    build_cache,
    meas_meas_cov,
    state_meas_cov,
    state_state_cov,
    submatrix_views,
)
from .errors import (
    CovarianceError,
    EnumerationCapExceeded,
    InstanceGenerationError,
    KFSchedError,
    UnsupportedConstraintError,
)
from .estimator import (
    CostMatrix,
    FilterCoefficients,
    cost_c,
    optimal_coefficients,
    recursive_kf_error,
    restricted_error,
)
from .problem import (
    ConstraintSystem,
    EnergyBudget,
    PerStepBudget,
    Schedule,
    ScheduleProblem,
    Selection,
    final_state_costs,
    is_feasible,
    load_problem,
    materialize,
    objective_weight_lqg,
    partial_feasible,
    total_error_costs,
)
from .solver import (
    Branching,
    Heuristic,
    Node,
    SolveResult,
    SolverConfig,
    Status,
    branch_variable,
    greedy_completion,
    node_lower_bound,
    solve,
)
from .system import InstanceSpec, SystemParams, generate_instance, validate

__version__ = "0.1.0"

__all__ = [
    "branch_variable",
    "Branching",
    "brute_force",
    "build_cache",
    "ConstraintSystem",
    "cost_c",
    "CostMatrix",
    "CovarianceCache",
    "CovarianceError",
    "EnergyBudget",
    "enumerate_feasible",
    "EnumerationCapExceeded",
    "FilterCoefficients",
    "final_state_costs",
    "generate_instance",
    "greedy",
    "greedy_completion",
    "Heuristic",
    "InstanceGenerationError",
    "InstanceSpec",
    "is_feasible",
    "KFSchedError",
    "load_problem",
    "materialize",
    "meas_meas_cov",
    "Node",
    "node_lower_bound",
    "objective_weight_lqg",
    "optimal_coefficients",
    "partial_feasible",
    "PerStepBudget",
    "recursive_kf_error",
    "restricted_error",
    "Schedule",
    "ScheduleProblem",
    "Selection",
    "solve",
    "SolverConfig",
    "SolveResult",
    "state_meas_cov",
    "state_state_cov",
    "Status",
    "submatrix_views",
    "SystemParams",
    "total_error_costs",
    "UnsupportedConstraintError",
    "validate",
]
