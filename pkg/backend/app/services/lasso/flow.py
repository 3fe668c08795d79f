"""
Fixed-time-stable KKT flow for the nonnegative QP.

The flow drives the KKT residual ``u = (Qz - w + q; z*w)`` along

    [Q, -I; W, Z] (dz/dt; dw/dt) = -k (1/||u|| + ||u||) u

so that ``||u||`` obeys ``dr/dt = -k (1 + r^2)`` and reaches zero no later
than ``pi / (2k)``. The same construction on an unconstrained smooth
objective gives the Newton flow ``H dx/dt = -k (1/||g|| + ||g||) g``.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Any, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.linalg import (
    LinAlgError,
    LinAlgWarning,
    cho_factor,
    cho_solve,
    get_lapack_funcs,
    lu_factor,
    lu_solve,
)

from app.core.config import settings
from app.core.logging import get_logger

from .exceptions import (
    DimensionMismatchError,
    EquilibriumReachedError,
    SingularSystemError,
)
from .problem import NnqpProblem

logger = get_logger(__name__)

__all__ = [
    "FlowState",
    "FlowParams",
    "Residual",
    "NewtonDirection",
    "REDUCED_COND_LIMIT",
    "FULL_COND_LIMIT",
    "gain_for_settling_time",
    "kkt_residual",
    "kkt_matrix",
    "gain_scale",
    "newton_direction",
    "flow_jacobian",
    "analytic_residual_norm",
    "analytic_settling_time",
    "unconstrained_newton_rhs",
    "newton_flow_gains",
    "finite_time_settling_bound",
    "fixed_time_settling_bound",
    "prescribed_time_bound",
    "lyapunov_settling_time",
]

# Above this condition estimate the reduced (W + ZQ) solve falls back to the
# full block system.
REDUCED_COND_LIMIT = 1e12
FULL_COND_LIMIT = 1e15


def gain_for_settling_time(T_p: float) -> float:
    """Gain k = pi / (2 T_p) that bounds the settling time by T_p."""
    if not T_p > 0:
        raise ValueError(f"T_p must be positive, got {T_p}")
    return math.pi / (2.0 * T_p)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Primal-dual pair (z, w) at flow time t."""

    z: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        z = np.array(self.z, dtype=float)
        w = np.array(self.w, dtype=float)
        if z.ndim != 1 or z.shape != w.shape:
            raise DimensionMismatchError(
                f"z {z.shape} and w {w.shape} must be vectors of equal length"
            )
        if self.t < 0:
            raise ValueError(f"Flow time must be nonnegative, got {self.t}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def uniform(cls, size: int, scale: float = 1.0) -> "FlowState":
        """State with every entry of z and w equal to ``scale``."""
        return cls(z=np.full(size, scale), w=np.full(size, scale))

    @classmethod
    def from_vector(cls, y: np.ndarray, t: float = 0.0) -> "FlowState":
        half = y.shape[0] // 2
        return cls(z=y[:half].copy(), w=y[half:].copy(), t=t)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.z, self.w))

    def is_strictly_positive(self) -> bool:
        return bool(np.all(self.z > 0) and np.all(self.w > 0))


class FlowParams(BaseModel):
    """Gain, prescribed settling time, stopping threshold and tolerances."""

    T_p: float = Field(..., gt=0, description="Prescribed settling time")
    k: float = Field(default=0.0, description="Gain, derived as pi / (2 T_p)")
    eps_stop: float = Field(
        default_factory=lambda: settings.DEFAULT_EPS_STOP,
        gt=0,
        description="Residual norm at which the flow counts as settled",
    )
    rtol: float = Field(default_factory=lambda: settings.DEFAULT_RTOL, gt=0)
    atol: float = Field(default_factory=lambda: settings.DEFAULT_ATOL, gt=0)
    tol_nn: float = Field(
        default_factory=lambda: settings.NONNEGATIVITY_TOL,
        gt=0,
        description="Allowed undershoot of z and w below zero",
    )

    @model_validator(mode="before")
    @classmethod
    def derive_gain(cls, data: Any) -> Any:  # noqa: ANN401
        if isinstance(data, dict) and not data.get("k") and data.get("T_p"):
            data = {**data, "k": gain_for_settling_time(float(data["T_p"]))}
        return data

    @model_validator(mode="after")
    def gain_matches_settling_time(self) -> "FlowParams":
        expected = gain_for_settling_time(self.T_p)
        if abs(self.k - expected) > 1e-12 * expected:
            raise ValueError(f"k must equal pi/(2*T_p) = {expected}, got {self.k}")
        return self

    @classmethod
    def from_settling_time(cls, T_p: float, **overrides: Any) -> "FlowParams":  # noqa: ANN401
        return cls(T_p=T_p, **overrides)

    @property
    def max_step(self) -> float:
        return self.T_p / 50.0


@dataclass(frozen=True, eq=False)
class Residual:
    """Stationarity residual u1, complementarity residual u2 and the norm of (u1; u2)."""

    u1: np.ndarray
    u2: np.ndarray
    norm: float

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.u1, self.u2))


class NewtonDirection(NamedTuple):
    dz: np.ndarray
    dw: np.ndarray
    fallback: bool
    condition_estimate: float


def _check_state(nnqp: NnqpProblem, s: FlowState) -> None:
    if s.z.shape[0] != nnqp.size:
        raise DimensionMismatchError(
            f"State has length {s.z.shape[0]}, problem expects {nnqp.size}"
        )


def kkt_residual(nnqp: NnqpProblem, s: FlowState) -> Residual:
    _check_state(nnqp, s)
    u1 = (nnqp.Q @ s.z + nnqp.q) - s.w
    u2 = s.z * s.w
    return Residual(u1=u1, u2=u2, norm=float(math.sqrt(u1 @ u1 + u2 @ u2)))


def kkt_matrix(nnqp: NnqpProblem, s: FlowState) -> np.ndarray:
    """Jacobian [Q, -I; W, Z] of the KKT residual with respect to (z, w)."""
    _check_state(nnqp, s)
    n = nnqp.size
    matrix = np.zeros((2 * n, 2 * n))
    matrix[:n, :n] = nnqp.Q
    matrix[:n, n:] = -np.eye(n)
    matrix[n:, :n] = np.diag(s.w)
    matrix[n:, n:] = np.diag(s.z)
    return matrix


def gain_scale(norm: float, k: float) -> float:
    """
    Shared scalar k (1/norm + norm) of the flow right-hand side.

    Raises:
        EquilibriumReachedError: if norm is zero; callers stop on the settle
            event instead of evaluating the flow there
    """
    if not norm > 0:
        raise EquilibriumReachedError("Residual norm is zero, the flow is at equilibrium")
    return k * (1.0 / norm + norm)


def _factor(matrix: np.ndarray) -> Tuple[Tuple[np.ndarray, np.ndarray], float]:
    """Pivoted LU factorization plus a 1-norm condition estimate."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(matrix, check_finite=False)
    (gecon,) = get_lapack_funcs(("gecon",), (lu,))
    rcond, _ = gecon(lu, np.linalg.norm(matrix, 1), norm="1")
    condition = 1.0 / rcond if rcond > 0 else math.inf
    return (lu, piv), condition


def newton_direction(
    nnqp: NnqpProblem,
    s: FlowState,
    k: float,
    residual: Optional[Residual] = None,
) -> NewtonDirection:
    """
    Solve [Q, -I; W, Z] (dz; dw) = -gain (u1; u2).

    Eliminates dw = Q dz + gain*u1 and solves (W + ZQ) dz = -gain (u2 + Z u1);
    switches to the full block system when the reduced matrix is
    ill-conditioned.

    Raises:
        EquilibriumReachedError: at an exact KKT point
        SingularSystemError: when neither system can be solved reliably
    """
    r = residual if residual is not None else kkt_residual(nnqp, s)
    gain = gain_scale(r.norm, k)

    reduced = s.z[:, None] * nnqp.Q
    reduced[np.diag_indices_from(reduced)] += s.w
    factor, condition = _factor(reduced)
    if condition <= REDUCED_COND_LIMIT:
        dz = lu_solve(factor, -gain * (r.u2 + s.z * r.u1), check_finite=False)
        dw = nnqp.Q @ dz + gain * r.u1
        return NewtonDirection(dz=dz, dw=dw, fallback=False, condition_estimate=condition)

    logger.debug(
        "Reduced Newton system ill-conditioned, using full block solve",
        flow_time=s.t,
        condition_estimate=condition,
    )
    factor, condition = _factor(kkt_matrix(nnqp, s))
    if not condition <= FULL_COND_LIMIT:
        raise SingularSystemError(
            "KKT Newton system is singular", flow_time=s.t, condition_estimate=condition
        )
    step = lu_solve(factor, -gain * r.vector, check_finite=False)
    n = nnqp.size
    return NewtonDirection(
        dz=step[:n], dw=step[n:], fallback=True, condition_estimate=condition
    )


def flow_jacobian(nnqp: NnqpProblem, s: FlowState, k: float) -> np.ndarray:
    """
    Jacobian of the explicit flow F(y) = -g(r) M(y)^{-1} u(y), y = (z; w).

    With v = M^{-1} u and dM v = B dy, B = [0, 0; diag(v_w), diag(v_z)]:
    DF = -(g'(r)/r) v (u^T M) - g (I - M^{-1} B).
    """
    r = kkt_residual(nnqp, s)
    gain = gain_scale(r.norm, k)
    matrix = kkt_matrix(nnqp, s)
    factor, condition = _factor(matrix)
    if not condition <= FULL_COND_LIMIT:
        raise SingularSystemError(
            "KKT matrix is singular", flow_time=s.t, condition_estimate=condition
        )

    n = nnqp.size
    u = r.vector
    v = lu_solve(factor, u, check_finite=False)
    coupling = np.zeros_like(matrix)
    coupling[n:, :n] = np.diag(v[n:])
    coupling[n:, n:] = np.diag(v[:n])
    gain_slope = k * (1.0 - 1.0 / r.norm**2)

    jacobian = -(gain_slope / r.norm) * np.outer(v, u @ matrix)
    jacobian -= gain * (
        np.eye(2 * n) - lu_solve(factor, coupling, check_finite=False)
    )
    return jacobian


def _check_analytic_args(norm0: float, k: float) -> None:
    if not (k > 0 and norm0 >= 0):
        raise ValueError("Requires k > 0 and norm0 >= 0")


def analytic_residual_norm(norm0: float, k: float, t: float) -> float:
    """Closed-form residual norm tan(max(0, arctan(norm0) - k t))."""
    _check_analytic_args(norm0, k)
    return float(math.tan(max(0.0, math.atan(norm0) - k * t)))


def analytic_settling_time(norm0: float, k: float) -> float:
    """Exact settling time arctan(norm0)/k, never above pi/(2k)."""
    _check_analytic_args(norm0, k)
    return float(math.atan(norm0) / k)


def unconstrained_newton_rhs(
    hessian: np.ndarray, grad: np.ndarray, k: float
) -> np.ndarray:
    """
    Velocity of the Newton fixed-time flow H x' = -k (1/||g|| + ||g||) g.

    Raises:
        EquilibriumReachedError: if the gradient is zero
        SingularSystemError: if the Hessian is not positive definite
    """
    grad = np.asarray(grad, dtype=float)
    gain = gain_scale(float(np.linalg.norm(grad)), k)
    try:
        factor = cho_factor(np.asarray(hessian, dtype=float), check_finite=False)
    except LinAlgError as e:
        raise SingularSystemError(f"Hessian is not positive definite: {e}") from e
    return cho_solve(factor, -gain * grad, check_finite=False)


# Settling-time bounds


def newton_flow_gains(k: float) -> Tuple[float, float, float]:
    """(k1, k2, mu) of the Lyapunov inequality obeyed by V = ||u||^2 / 2."""
    return math.sqrt(2.0) * k, 2.0 * math.sqrt(2.0) * k, 2.0


def finite_time_settling_bound(v0: float, k: float, alpha: float) -> float:
    """Bound V0^(1-alpha) / (k (1-alpha)) for V' <= -k V^alpha, 0 < alpha < 1."""
    if not (k > 0 and 0 < alpha < 1 and v0 >= 0):
        raise ValueError("Requires k > 0, 0 < alpha < 1 and v0 >= 0")
    return v0 ** (1.0 - alpha) / (k * (1.0 - alpha))


def fixed_time_settling_bound(k1: float, k2: float, alpha1: float, alpha2: float) -> float:
    """Bound 1/(k1 (1-alpha1)) + 1/(k2 (alpha2-1)) for V' <= -k1 V^a1 - k2 V^a2."""
    if not (k1 > 0 and k2 > 0 and 0 < alpha1 < 1 and alpha2 > 1):
        raise ValueError("Requires k1, k2 > 0, 0 < alpha1 < 1 and alpha2 > 1")
    return 1.0 / (k1 * (1.0 - alpha1)) + 1.0 / (k2 * (alpha2 - 1.0))


def prescribed_time_bound(k1: float, k2: float, mu: float) -> float:
    """Tight bound mu pi / (2 sqrt(k1 k2)) for exponents 1 -+ 1/mu."""
    if not (k1 > 0 and k2 > 0 and mu > 1):
        raise ValueError("Requires k1, k2 > 0 and mu > 1")
    return mu * math.pi / (2.0 * math.sqrt(k1 * k2))


def lyapunov_settling_time(v0: float, k1: float, k2: float, mu: float) -> float:
    """Exact settling time of V' = -k1 V^(1-1/mu) - k2 V^(1+1/mu) from V(0) = v0."""
    if not (k1 > 0 and k2 > 0 and mu > 1 and v0 >= 0):
        raise ValueError("Requires k1, k2 > 0, mu > 1 and v0 >= 0")
    return mu / math.sqrt(k1 * k2) * math.atan(math.sqrt(k2 / k1) * v0 ** (1.0 / mu))
