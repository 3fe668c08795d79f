"""End-to-end prescribed-time solve of one elastic-net instance."""

from typing import Optional, Tuple

from app.core.logging import get_logger

from .flow import FlowParams, FlowState
from .integrate import Trajectory, integrate_flow
from .problem import LassoProblem, Solution, build_nnqp, elastic_net_objective

logger = get_logger(__name__)

__all__ = ["solve_lasso", "solve_lasso_with_trajectory"]


def solve_lasso_with_trajectory(
    problem: LassoProblem,
    T_p: float,
    init_scale: float = 1.0,
    params: Optional[FlowParams] = None,
) -> Tuple[Solution, Trajectory]:
    """
    Build the QP, pick k = pi/(2 T_p), integrate from init_scale * 1 and
    read x off z(T_p).
    """
    if not init_scale > 0:
        raise ValueError(f"init_scale must be positive, got {init_scale}")
    params = params or FlowParams.from_settling_time(T_p)
    nnqp = build_nnqp(problem)
    trajectory = integrate_flow(nnqp, FlowState.uniform(nnqp.size, init_scale), params)

    final = trajectory.final
    solution = Solution(
        x=final.x,
        objective=elastic_net_objective(problem, final.x),
        kkt_residual_norm=final.residual_norm,
    )
    if not trajectory.settled:
        logger.warning(
            "Flow did not settle by T_p",
            T_p=T_p,
            residual_norm=final.residual_norm,
        )
    return solution, trajectory


def solve_lasso(problem: LassoProblem, T_p: float, init_scale: float = 1.0) -> Solution:
    solution, _ = solve_lasso_with_trajectory(problem, T_p, init_scale)
    return solution
