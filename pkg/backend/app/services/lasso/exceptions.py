"""Custom exceptions for the Lasso flow solver."""

from typing import Optional

import numpy as np


class LassoError(Exception):
    """Base exception for problem, flow, integration and oracle errors."""


class ProblemValidationError(LassoError, ValueError):
    """A problem instance or problem file violates its invariants."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class DimensionMismatchError(LassoError, ValueError):
    """Vector or matrix sizes are inconsistent."""


class EquilibriumReachedError(LassoError):
    """The residual norm is zero; the flow is at its equilibrium."""


class SingularSystemError(LassoError):
    """A linear system of the flow could not be solved reliably."""

    def __init__(
        self,
        message: str,
        flow_time: Optional[float] = None,
        condition_estimate: float = float("inf"),
    ) -> None:
        super().__init__(
            f"{message} (flow_time={flow_time}, condition_estimate={condition_estimate:.3e})"
        )
        self.flow_time = flow_time
        self.condition_estimate = condition_estimate


class IntegrationError(LassoError):
    """Integration of the flow failed at a given flow time."""

    def __init__(self, message: str, flow_time: float) -> None:
        super().__init__(f"{message} (flow_time={flow_time})")
        self.flow_time = flow_time


class StepSizeUnderflowError(IntegrationError):
    """Repeated step rejections drove the step size below its minimum."""

    def __init__(self, flow_time: float, step_size: float, last_state: np.ndarray) -> None:
        super().__init__(f"Step size {step_size:.3e} below minimum", flow_time)
        self.step_size = step_size
        self.last_state = last_state


class OracleError(LassoError):
    """A reference solver failed."""


class EnumerationLimitError(OracleError, ValueError):
    """The instance is too large for sign-pattern enumeration."""
