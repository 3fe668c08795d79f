"""
Reference minimizers for elastic-net instances.

``solve_prox`` runs accelerated proximal gradient (FISTA) with restarts and
works for any size; ``solve_sign_enum`` enumerates every sign pattern of x and
is exact, but only feasible for a handful of variables.
"""

import itertools
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.core.config import settings
from app.core.logging import get_logger, make_run_context

from .exceptions import EnumerationLimitError, OracleError
from .problem import LassoProblem, NnqpProblem, elastic_net_objective, split_solution

logger = get_logger(__name__)

__all__ = [
    "OracleMethod",
    "OracleResult",
    "MAX_SIGN_ENUM_VARIABLES",
    "POWER_ITERATIONS",
    "lipschitz_constant",
    "soft_threshold",
    "prox_step",
    "solve_prox",
    "solve_sign_enum",
    "solve_nnqp_oracle",
]

MAX_SIGN_ENUM_VARIABLES = 8
POWER_ITERATIONS = 30
# power iteration approaches the top eigenvalue from below
_LIPSCHITZ_SAFETY = 1.05


class OracleMethod(str, Enum):
    PROX_GRADIENT = "prox_gradient"
    SIGN_ENUM = "sign_enum"


@dataclass(frozen=True, eq=False)
class OracleResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    method: OracleMethod
    fixed_point_residual: float = 0.0


def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def lipschitz_constant(p: LassoProblem) -> float:
    """Lipschitz constant of the smooth gradient, 2 lambda_max(A^T A) + 2 rho."""
    vector = np.ones(p.n_x) / np.sqrt(p.n_x)
    estimate = 0.0
    for _ in range(POWER_ITERATIONS):
        image = p.A.T @ (p.A @ vector)
        estimate = float(np.linalg.norm(image))
        if estimate == 0.0:
            break
        vector = image / estimate
    return 2.0 * _LIPSCHITZ_SAFETY * estimate + 2.0 * p.rho


def _smooth_part(p: LassoProblem, x: np.ndarray) -> float:
    misfit = p.A @ x - p.b
    return float(misfit @ misfit + p.rho * (x @ x))


def _smooth_gradient(p: LassoProblem, x: np.ndarray) -> np.ndarray:
    return 2.0 * (p.A.T @ (p.A @ x - p.b)) + 2.0 * p.rho * x


def prox_step(p: LassoProblem, x: np.ndarray, lipschitz: float) -> np.ndarray:
    """One proximal-gradient step T(x) = soft(x - grad/L, tau/L)."""
    return soft_threshold(x - _smooth_gradient(p, x) / lipschitz, p.tau / lipschitz)


def solve_prox(
    p: LassoProblem,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> OracleResult:
    """
    Minimize the elastic-net objective by FISTA with adaptive restart.

    Convergence is declared when the fixed-point residual ||x - T(x)||_inf
    drops to ``tol``. The step is 1/L with L from a power-iteration estimate,
    doubled whenever the quadratic upper bound fails on a step.

    Returns a non-converged result with the last iterate when ``max_iter``
    runs out.
    """
    tol = settings.ORACLE_TOL if tol is None else tol
    max_iter = settings.ORACLE_MAX_ITER if max_iter is None else max_iter
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")

    start = time.monotonic()
    lipschitz = lipschitz_constant(p)
    x = np.zeros(p.n_x)
    y = x.copy()
    momentum = 1.0
    objective = elastic_net_objective(p, x)
    residual = np.inf

    iterations = 0
    for iterations in range(1, max_iter + 1):
        smooth_y = _smooth_part(p, y)
        gradient_y = _smooth_gradient(p, y)
        while True:
            candidate = soft_threshold(y - gradient_y / lipschitz, p.tau / lipschitz)
            step = candidate - y
            bound = smooth_y + gradient_y @ step + 0.5 * lipschitz * (step @ step)
            if _smooth_part(p, candidate) <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            lipschitz *= 2.0

        candidate_objective = elastic_net_objective(p, candidate)
        if candidate_objective > objective:
            # restart from the last iterate with a plain proximal step
            momentum = 1.0
            candidate = prox_step(p, x, lipschitz)
            candidate_objective = elastic_net_objective(p, candidate)

        next_momentum = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum**2))
        y = candidate + ((momentum - 1.0) / next_momentum) * (candidate - x)
        x, objective, momentum = candidate, candidate_objective, next_momentum

        residual = float(np.max(np.abs(x - prox_step(p, x, lipschitz))))
        if residual <= tol:
            logger.debug(
                "Prox oracle converged",
                **make_run_context(start_time=start, iterations=iterations, residual=residual),
            )
            return OracleResult(
                x=x,
                objective=objective,
                iterations=iterations,
                converged=True,
                method=OracleMethod.PROX_GRADIENT,
                fixed_point_residual=residual,
            )

    logger.warning(
        "Prox oracle hit the iteration limit", iterations=iterations, residual=residual
    )
    return OracleResult(
        x=x,
        objective=objective,
        iterations=iterations,
        converged=False,
        method=OracleMethod.PROX_GRADIENT,
        fixed_point_residual=residual,
    )


def solve_sign_enum(p: LassoProblem) -> OracleResult:
    """
    Exact minimizer by enumerating all 3^n_x sign patterns of x.

    For a pattern s with support S the objective is a smooth quadratic whose
    stationary point solves 2 (A_S^T A_S + rho I) x_S = 2 A_S^T b - tau s_S.
    Patterns whose solution contradicts s are discarded.

    Raises:
        EnumerationLimitError: if n_x exceeds MAX_SIGN_ENUM_VARIABLES
    """
    if p.n_x > MAX_SIGN_ENUM_VARIABLES:
        raise EnumerationLimitError(
            f"Sign enumeration supports at most {MAX_SIGN_ENUM_VARIABLES} variables, "
            f"got {p.n_x}"
        )

    best_x = np.zeros(p.n_x)
    best_objective = elastic_net_objective(p, best_x)
    patterns = 1
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=p.n_x):
        pattern = np.array(signs)
        support = np.flatnonzero(pattern)
        if support.size == 0:
            continue
        patterns += 1
        columns = p.A[:, support]
        normal = 2.0 * (columns.T @ columns + p.rho * np.eye(support.size))
        rhs = 2.0 * (columns.T @ p.b) - p.tau * pattern[support]
        try:
            x_support = cho_solve(cho_factor(normal, check_finite=False), rhs)
        except LinAlgError as e:
            raise OracleError(f"Pattern system is not positive definite: {e}") from e
        if np.any(pattern[support] * x_support < 0):
            continue
        x = np.zeros(p.n_x)
        x[support] = x_support
        objective = elastic_net_objective(p, x)
        if objective < best_objective:
            best_x, best_objective = x, objective

    return OracleResult(
        x=best_x,
        objective=best_objective,
        iterations=patterns,
        converged=True,
        method=OracleMethod.SIGN_ENUM,
    )


def solve_nnqp_oracle(nnqp: NnqpProblem, tol: Optional[float] = None) -> np.ndarray:
    """
    Minimizer of the nonnegative QP as the complementary split of the Lasso minimizer.

    Raises:
        OracleError: if nnqp has no source instance or the prox oracle does not converge
    """
    if nnqp.source is None:
        raise OracleError("NNQP was not built from an elastic-net instance")
    result = solve_prox(nnqp.source, tol=tol)
    if not result.converged:
        raise OracleError(
            f"Prox oracle did not converge in {result.iterations} iterations "
            f"(fixed-point residual {result.fixed_point_residual:.3e})"
        )
    return split_solution(result.x)
