"""Prescribed-time elastic-net solver: QP reformulation, KKT flow, integrator and oracles."""

from .exceptions import (
    DimensionMismatchError,
    EnumerationLimitError,
    EquilibriumReachedError,
    IntegrationError,
    LassoError,
    OracleError,
    ProblemValidationError,
    SingularSystemError,
    StepSizeUnderflowError,
)
from .flow import (
    FlowParams,
    FlowState,
    NewtonDirection,
    Residual,
    analytic_residual_norm,
    analytic_settling_time,
    flow_jacobian,
    gain_for_settling_time,
    kkt_residual,
    newton_direction,
)
from .integrate import (
    IntegrationStats,
    NewtonFlowResult,
    Trajectory,
    TrajectorySample,
    detect_settle,
    integrate_flow,
    integrate_newton_flow,
)
from .oracle import (
    OracleMethod,
    OracleResult,
    solve_nnqp_oracle,
    solve_prox,
    solve_sign_enum,
)
from .problem import (
    LassoProblem,
    NnqpProblem,
    Solution,
    build_nnqp,
    elastic_net_objective,
    load_problem,
    nnqp_objective,
    recover_solution,
    save_problem,
    split_objective,
    split_solution,
)
from .solver import solve_lasso, solve_lasso_with_trajectory

__all__ = [
    # Problems
    "LassoProblem",
    "NnqpProblem",
    "Solution",
    "build_nnqp",
    "recover_solution",
    "split_solution",
    "elastic_net_objective",
    "split_objective",
    "nnqp_objective",
    "load_problem",
    "save_problem",
    # Flow
    "FlowState",
    "FlowParams",
    "Residual",
    "NewtonDirection",
    "gain_for_settling_time",
    "kkt_residual",
    "newton_direction",
    "flow_jacobian",
    "analytic_residual_norm",
    "analytic_settling_time",
    # Integration
    "Trajectory",
    "TrajectorySample",
    "IntegrationStats",
    "NewtonFlowResult",
    "detect_settle",
    "integrate_flow",
    "integrate_newton_flow",
    # Oracles
    "OracleMethod",
    "OracleResult",
    "solve_prox",
    "solve_sign_enum",
    "solve_nnqp_oracle",
    # Solver
    "solve_lasso",
    "solve_lasso_with_trajectory",
    # Errors
    "LassoError",
    "ProblemValidationError",
    "DimensionMismatchError",
    "EquilibriumReachedError",
    "SingularSystemError",
    "IntegrationError",
    "StepSizeUnderflowError",
    "OracleError",
    "EnumerationLimitError",
]
