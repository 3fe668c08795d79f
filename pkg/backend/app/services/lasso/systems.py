"""Flow systems consumed by the implicit integrator."""

from typing import Callable, Protocol

import numpy as np

from .flow import (
    FlowState,
    flow_jacobian,
    gain_scale,
    kkt_residual,
    newton_direction,
    unconstrained_newton_rhs,
)
from .problem import NnqpProblem

__all__ = [
    "FlowSystem",
    "KktFlowSystem",
    "NewtonFlowSystem",
]


class FlowSystem(Protocol):
    """
    A fixed-time flow y' = F(y) whose residual norm r(y) settles at rate k.

    Implementations hold the velocity at zero once r(y) <= eps_stop.
    """

    k: float
    eps_stop: float
    linear_solves: int
    fallback_solves: int

    def residual_norm(self, y: np.ndarray) -> float:
        """Norm of the residual the flow drives to zero."""
        ...

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        """
        Flow velocity at y.

        Raises:
            SingularSystemError: if the velocity cannot be solved for
        """
        ...

    def jacobian(self, t: float, y: np.ndarray) -> np.ndarray:
        """Jacobian of the velocity, exact or a close approximation."""
        ...


class KktFlowSystem:
    """KKT flow of a nonnegative QP over the stacked state y = (z; w)."""

    def __init__(self, nnqp: NnqpProblem, k: float, eps_stop: float) -> None:
        self.nnqp = nnqp
        self.k = k
        self.eps_stop = eps_stop
        self.linear_solves = 0
        self.fallback_solves = 0

    def residual_norm(self, y: np.ndarray) -> float:
        return kkt_residual(self.nnqp, FlowState.from_vector(y)).norm

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        state = FlowState.from_vector(y, t=max(t, 0.0))
        residual = kkt_residual(self.nnqp, state)
        if residual.norm <= self.eps_stop:
            return np.zeros_like(y)
        direction = newton_direction(self.nnqp, state, self.k, residual=residual)
        self.linear_solves += 2 if direction.fallback else 1
        self.fallback_solves += int(direction.fallback)
        return np.concatenate((direction.dz, direction.dw))

    def jacobian(self, t: float, y: np.ndarray) -> np.ndarray:
        state = FlowState.from_vector(y, t=max(t, 0.0))
        if kkt_residual(self.nnqp, state).norm <= self.eps_stop:
            return np.zeros((y.shape[0], y.shape[0]))
        self.linear_solves += 1
        return flow_jacobian(self.nnqp, state, self.k)


class NewtonFlowSystem:
    """Newton fixed-time flow of an unconstrained smooth objective."""

    def __init__(
        self,
        grad: Callable[[np.ndarray], np.ndarray],
        hessian: Callable[[np.ndarray], np.ndarray],
        k: float,
        eps_stop: float,
    ) -> None:
        self.grad = grad
        self.hessian = hessian
        self.k = k
        self.eps_stop = eps_stop
        self.linear_solves = 0
        self.fallback_solves = 0

    def residual_norm(self, y: np.ndarray) -> float:
        return float(np.linalg.norm(self.grad(y)))

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        gradient = self.grad(y)
        if np.linalg.norm(gradient) <= self.eps_stop:
            return np.zeros_like(y)
        self.linear_solves += 1
        return unconstrained_newton_rhs(self.hessian(y), gradient, self.k)

    def jacobian(self, t: float, y: np.ndarray) -> np.ndarray:
        """Exact for quadratics; drops third-derivative terms otherwise."""
        gradient = self.grad(y)
        norm = float(np.linalg.norm(gradient))
        if norm <= self.eps_stop:
            return np.zeros((y.shape[0], y.shape[0]))
        hessian = np.asarray(self.hessian(y), dtype=float)
        gain = gain_scale(norm, self.k)
        gain_slope = self.k * (1.0 - 1.0 / norm**2)
        # v = H^{-1} g, recovered from the flow velocity -gain * v
        v = -unconstrained_newton_rhs(hessian, gradient, self.k) / gain
        self.linear_solves += 1
        return -(gain_slope / norm) * np.outer(v, gradient @ hessian) - gain * np.eye(
            y.shape[0]
        )
