"""
Elastic-net instances and their nonnegative QP reformulation.

The elastic-net objective ``||Ax - b||^2 + tau*||x||_1 + rho*||x||^2`` is
rewritten over the split ``x = x_plus - x_minus`` with ``x_plus, x_minus >= 0``
as ``(1/2) y^T Q y + q^T y + b^T b`` where ``y = (x_plus; x_minus)``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from app.core.logging import get_logger
from app.schemas.problem import ProblemFile

from .exceptions import DimensionMismatchError, ProblemValidationError

logger = get_logger(__name__)

__all__ = [
    "LassoProblem",
    "NnqpProblem",
    "Solution",
    "build_nnqp",
    "recover_solution",
    "split_solution",
    "elastic_net_objective",
    "nnqp_objective",
    "split_objective",
    "load_problem",
    "save_problem",
]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class LassoProblem:
    """Elastic-net instance (A, b, tau, rho)."""

    A: np.ndarray
    b: np.ndarray
    tau: float
    rho: float

    def __post_init__(self) -> None:
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise ProblemValidationError("A", f"expected a nonempty matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ProblemValidationError("A", "contains non-finite entries")
        if b.ndim != 1 or b.shape[0] != A.shape[0]:
            raise ProblemValidationError(
                "b", f"expected length {A.shape[0]} to match A, got shape {b.shape}"
            )
        if not np.all(np.isfinite(b)):
            raise ProblemValidationError("b", "contains non-finite entries")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ProblemValidationError("tau", f"must be positive, got {self.tau}")
        # rho > 0 keeps the stacked Q nonsingular even when A has full column rank
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ProblemValidationError("rho", f"must be positive, got {self.rho}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @property
    def n_x(self) -> int:
        return int(self.A.shape[1])


@dataclass(frozen=True, eq=False)
class NnqpProblem:
    """Nonnegative QP ``min (1/2) y^T Q y + q^T y  s.t. y >= 0`` over ``y = (x_plus; x_minus)``."""

    Q: np.ndarray
    q: np.ndarray
    n_x: int
    source: Optional[LassoProblem] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "Q", np.array(self.Q, dtype=float))
        object.__setattr__(self, "q", np.array(self.q, dtype=float))
        size = 2 * self.n_x
        if self.Q.shape != (size, size) or self.q.shape != (size,):
            raise DimensionMismatchError(
                f"Q {self.Q.shape} and q {self.q.shape} do not match n_x={self.n_x}"
            )
        _frozen(self.Q)
        _frozen(self.q)

    @property
    def size(self) -> int:
        return 2 * self.n_x


@dataclass(frozen=True, eq=False)
class Solution:
    """Recovered elastic-net minimizer with its objective and KKT residual."""

    x: np.ndarray
    objective: float
    kkt_residual_norm: float


def build_nnqp(p: LassoProblem) -> NnqpProblem:
    """
    Build the nonnegative QP equivalent to an elastic-net instance.

    Q = 2([G, -G; -G, G] + rho*I) and q = [-2A^T b + tau*1; 2A^T b + tau*1]
    with G = A^T A, which matches direct expansion of the split objective.
    """
    n = p.n_x
    gram = p.A.T @ p.A
    # mirror the upper triangle so G, and hence Q, is exactly symmetric
    upper = np.triu(gram)
    gram = upper + np.triu(upper, 1).T
    correlation = p.A.T @ p.b

    Q = np.empty((2 * n, 2 * n))
    Q[:n, :n] = 2.0 * gram
    Q[:n, n:] = -2.0 * gram
    Q[n:, :n] = -2.0 * gram
    Q[n:, n:] = 2.0 * gram
    Q[np.diag_indices(2 * n)] += 2.0 * p.rho

    q = np.concatenate((-2.0 * correlation + p.tau, 2.0 * correlation + p.tau))
    return NnqpProblem(Q=Q, q=q, n_x=n, source=p)


def _check_length(vector: np.ndarray, expected: int, name: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.ndim != 1 or vector.shape[0] != expected:
        raise DimensionMismatchError(
            f"{name} must have length {expected}, got shape {vector.shape}"
        )
    return vector


def recover_solution(nnqp: NnqpProblem, z: np.ndarray) -> np.ndarray:
    """Return x = z[:n_x] - z[n_x:]."""
    z = _check_length(z, nnqp.size, "z")
    return z[: nnqp.n_x] - z[nnqp.n_x :]


def split_solution(x: np.ndarray) -> np.ndarray:
    """Return the complementary split (max(x, 0); max(-x, 0))."""
    x = np.asarray(x, dtype=float)
    return np.concatenate((np.maximum(x, 0.0), np.maximum(-x, 0.0)))


def elastic_net_objective(p: LassoProblem, x: np.ndarray) -> float:
    x = _check_length(x, p.n_x, "x")
    misfit = p.A @ x - p.b
    return float(misfit @ misfit + p.tau * np.sum(np.abs(x)) + p.rho * (x @ x))


def split_objective(p: LassoProblem, y: np.ndarray) -> float:
    """Evaluate g(x_plus, x_minus) directly from its definition."""
    y = _check_length(y, 2 * p.n_x, "y")
    x_plus, x_minus = y[: p.n_x], y[p.n_x :]
    misfit = p.A @ (x_plus - x_minus) - p.b
    return float(
        misfit @ misfit
        + p.tau * np.sum(y)
        + p.rho * (x_plus @ x_plus)
        + p.rho * (x_minus @ x_minus)
    )


def nnqp_objective(nnqp: NnqpProblem, y: np.ndarray) -> float:
    y = _check_length(y, nnqp.size, "y")
    return float(0.5 * (y @ (nnqp.Q @ y)) + nnqp.q @ y)


def load_problem(path: str | Path) -> LassoProblem:
    """
    Load a problem JSON file.

    Raises:
        ProblemValidationError: naming the offending field when the file is
            malformed or the instance violates its invariants
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ProblemValidationError("<file>", f"{path} is not valid JSON: {e}") from e

    try:
        document = ProblemFile.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ProblemValidationError(location, first["msg"]) from e

    problem = LassoProblem(
        A=np.array(document.A, dtype=float),
        b=np.array(document.b, dtype=float),
        tau=document.tau,
        rho=document.rho,
    )
    logger.debug("Problem loaded", path=str(path), m=problem.m, n_x=problem.n_x)
    return problem


def save_problem(problem: LassoProblem, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = ProblemFile(
        A=problem.A.tolist(), b=problem.b.tolist(), tau=problem.tau, rho=problem.rho
    )
    path.write_text(document.model_dump_json(indent=2), encoding="utf-8")
    return path
