"""
Adaptive implicit integration of fixed-time flows.

Uses a seven-stage ESDIRK 5(4) scheme (L-stable, stiffly accurate) with
simplified Newton iterations on each implicit stage. Step endpoints land
exactly on the requested sample times, and no step crosses the predicted
remaining settling time arctan(r)/k, so the equilibrium is approached from
the smooth side and detected by the settle event.
"""

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from app.core.config import settings
from app.core.logging import get_logger, make_run_context

from .exceptions import IntegrationError, SingularSystemError, StepSizeUnderflowError
from .flow import FlowParams, FlowState
from .problem import NnqpProblem, recover_solution
from .systems import FlowSystem, KktFlowSystem, NewtonFlowSystem

logger = get_logger(__name__)

__all__ = [
    "Esdirk54Stepper",
    "StepResult",
    "IntegrationStats",
    "TrajectorySample",
    "Trajectory",
    "NewtonFlowResult",
    "SETTLE_APPROACH_FRACTION",
    "MAX_STEP_ATTEMPTS",
    "detect_settle",
    "locate_settle_time",
    "integrate_path",
    "integrate_flow",
    "integrate_newton_flow",
]

# Fraction of the predicted remaining settling time a single step may cover.
SETTLE_APPROACH_FRACTION = 0.9
# Accepted plus rejected steps before a path is abandoned.
MAX_STEP_ATTEMPTS = 200_000

_GAMMA = 23 / 125
_NODES = np.array(
    [
        0.0,
        46 / 125,
        7121331996143 / 11335814405378,
        49 / 353,
        3706679970760 / 5295570149437,
        347 / 382,
        1.0,
    ]
)
# explicit stage coefficients a_ij for j < i; the diagonal is _GAMMA
_COUPLING = [
    np.array([]),
    np.array([23 / 125]),
    np.array([791020047304 / 3561426431547, 791020047304 / 3561426431547]),
    np.array(
        [
            -158159076358 / 11257294102345,
            -158159076358 / 11257294102345,
            -85517644447 / 5003708988389,
        ]
    ),
    np.array(
        [
            -1653327111580 / 4048416487981,
            -1653327111580 / 4048416487981,
            1514767744496 / 9099671765375,
            14283835447591 / 12247432691556,
        ]
    ),
    np.array(
        [
            -4540011970825 / 8418487046959,
            -4540011970825 / 8418487046959,
            -1790937573418 / 7393406387169,
            10819093665085 / 7266595846747,
            4109463131231 / 7386972500302,
        ]
    ),
    np.array(
        [
            -188593204321 / 4778616380481,
            -188593204321 / 4778616380481,
            2809310203510 / 10304234040467,
            1021729336898 / 2364210264653,
            870612361811 / 2470410392208,
            -1307970675534 / 8059683598661,
        ]
    ),
]
_WEIGHTS = np.append(_COUPLING[6], _GAMMA)
_EMBEDDED_WEIGHTS = np.array(
    [
        -582099335757 / 7214068459310,
        -582099335757 / 7214068459310,
        615023338567 / 3362626566945,
        3192122436311 / 6174152374399,
        6156034052041 / 14430468657929,
        -1011318518279 / 9693750372484,
        1914490192573 / 13754262428401,
    ]
)
_ERROR_WEIGHTS = _WEIGHTS - _EMBEDDED_WEIGHTS
_ERROR_EXPONENT = 1.0 / 5.0


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(values * values)))


class StepResult(NamedTuple):
    y: np.ndarray
    error_norm: float
    converged: bool
    newton_iterations: int


class Esdirk54Stepper:
    """
    Single steps of the ESDIRK 5(4) scheme on a flow system.

    ``error_norm`` is the RMS of the embedded error estimate scaled by
    ``atol + rtol * max(|y0|, |y1|)``; a step is acceptable when it is <= 1.
    """

    def __init__(
        self,
        system: FlowSystem,
        rtol: float,
        atol: float,
        newton_tol: float = 1e-3,
        max_newton_iter: int = 10,
    ) -> None:
        self.system = system
        self.rtol = rtol
        self.atol = atol
        self.newton_tol = newton_tol
        self.max_newton_iter = max_newton_iter
        self.linear_solves = 0

    def step(
        self,
        t: float,
        y: np.ndarray,
        dt: float,
        jacobian: Optional[np.ndarray] = None,
    ) -> StepResult:
        if not dt > 0:
            raise ValueError(f"Step size must be positive, got {dt}")
        size = y.shape[0]
        if jacobian is None:
            jacobian = self.system.jacobian(t, y)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LinAlgWarning)
            factor = lu_factor(np.eye(size) - dt * _GAMMA * jacobian, check_finite=False)
        self.linear_solves += 1
        if not np.all(np.isfinite(factor[0])) or np.any(np.diag(factor[0]) == 0):
            return StepResult(y, math.inf, False, 0)

        slopes = np.empty((_NODES.shape[0], size))
        slopes[0] = self.system.rhs(t, y)
        scale = self.atol + self.rtol * np.abs(y)
        iterations = 0

        for i in range(1, _NODES.shape[0]):
            base = y + dt * (_COUPLING[i] @ slopes[:i])
            stage = base + dt * _GAMMA * slopes[i - 1]
            stage_time = t + _NODES[i] * dt
            previous = math.inf
            converged = False
            for _ in range(self.max_newton_iter):
                iterations += 1
                try:
                    velocity = self.system.rhs(stage_time, stage)
                except SingularSystemError:
                    return StepResult(y, math.inf, False, iterations)
                correction = lu_solve(
                    factor, base + dt * _GAMMA * velocity - stage, check_finite=False
                )
                self.linear_solves += 1
                stage = stage + correction
                size_of_correction = _rms(correction / scale)
                if not math.isfinite(size_of_correction):
                    break
                if size_of_correction <= self.newton_tol:
                    converged = True
                    break
                if size_of_correction >= previous:
                    break
                previous = size_of_correction
            if not converged:
                return StepResult(y, math.inf, False, iterations)
            slopes[i] = (stage - base) / (dt * _GAMMA)

        y_new = stage
        error = dt * (_ERROR_WEIGHTS @ slopes)
        error_scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        return StepResult(y_new, _rms(error / error_scale), True, iterations)


@dataclass
class IntegrationStats:
    steps: int = 0
    rejected_steps: int = 0
    linear_solves: int = 0
    fallback_solves: int = 0


def detect_settle(norm: float, eps_stop: float) -> bool:
    """True once the residual norm is at or below the stopping threshold."""
    return norm <= eps_stop


def locate_settle_time(
    t0: float, norm0: float, t1: float, norm1: float, eps_stop: float
) -> float:
    """
    Time at which the residual norm crosses eps_stop inside [t0, t1].

    arctan of the residual norm decreases linearly in time along the flow, so
    the crossing is found by linear interpolation in that variable.
    """
    a0, a1, target = math.atan(norm0), math.atan(norm1), math.atan(eps_stop)
    if a0 <= target:
        return t0
    if a0 <= a1:
        return t1
    fraction = min(1.0, max(0.0, (a0 - target) / (a0 - a1)))
    return t0 + fraction * (t1 - t0)


@dataclass
class _Path:
    times: List[float]
    states: List[np.ndarray]
    norms: List[float]
    settle_time: Optional[float]
    stats: IntegrationStats


def _sample_grid(sample_times: Sequence[float], t_end: float) -> np.ndarray:
    grid = np.asarray(sample_times, dtype=float)
    if grid.size and (grid.min() < 0 or grid.max() > t_end):
        raise ValueError(f"Sample times must lie in [0, {t_end}]")
    return np.unique(np.concatenate((grid, [0.0, t_end])))


def integrate_path(
    system: FlowSystem,
    y0: np.ndarray,
    t_end: float,
    sample_times: Sequence[float],
    rtol: float,
    atol: float,
    max_step: float,
    tol_nn: Optional[float] = None,
) -> _Path:
    """
    Integrate a flow system from t = 0 to t_end, sampling at sample_times.

    When ``tol_nn`` is given, steps taking any entry below ``-tol_nn`` are
    rejected and retried with half the step size.

    Raises:
        StepSizeUnderflowError: if rejections push the step below its minimum
        IntegrationError: if MAX_STEP_ATTEMPTS steps do not reach t_end
        SingularSystemError: if the flow cannot be evaluated at an accepted state
    """
    grid = _sample_grid(sample_times, t_end)
    stepper = Esdirk54Stepper(system, rtol=rtol, atol=atol)
    stats = IntegrationStats()

    t = 0.0
    y = np.array(y0, dtype=float)
    norm = system.residual_norm(y)
    path = _Path(times=[0.0], states=[y.copy()], norms=[norm], settle_time=None, stats=stats)

    next_index = 1
    step_size = min(max_step, grid[1] - grid[0])
    if detect_settle(norm, system.eps_stop):
        path.settle_time = 0.0
    else:
        jacobian = system.jacobian(t, y)
        while next_index < grid.shape[0]:
            target = grid[next_index]
            remaining = math.atan(norm) / system.k
            attempt = min(step_size, max_step, target - t, SETTLE_APPROACH_FRACTION * remaining)
            if attempt < 10.0 * np.spacing(max(t, 1.0)):
                raise StepSizeUnderflowError(flow_time=t, step_size=attempt, last_state=y)
            if stats.steps + stats.rejected_steps >= MAX_STEP_ATTEMPTS:
                raise IntegrationError(f"No progress after {MAX_STEP_ATTEMPTS} step attempts", t)

            result = stepper.step(t, y, attempt, jacobian)
            if not result.converged:
                stats.rejected_steps += 1
                step_size = attempt / 2.0
                continue
            if result.error_norm > 1.0:
                stats.rejected_steps += 1
                step_size = attempt * max(0.2, 0.9 * result.error_norm ** -_ERROR_EXPONENT)
                continue
            if tol_nn is not None and result.y.min() < -tol_nn:
                stats.rejected_steps += 1
                step_size = attempt / 2.0
                continue

            stats.steps += 1
            growth = 5.0 if result.error_norm == 0 else min(
                5.0, 0.9 * result.error_norm ** -_ERROR_EXPONENT
            )
            step_size = max(step_size, attempt * growth) if attempt < step_size else attempt * growth
            # within a few ulps of the sample counts as landing on it
            reached_target = t + attempt >= target - 4.0 * np.spacing(target)
            t_new = target if reached_target else t + attempt
            y_new = result.y
            norm_new = system.residual_norm(y_new)

            if detect_settle(norm_new, system.eps_stop):
                path.settle_time = locate_settle_time(t, norm, t_new, norm_new, system.eps_stop)
                t, y, norm = t_new, y_new, norm_new
                break

            t, y, norm = t_new, y_new, norm_new
            if reached_target:
                path.times.append(t)
                path.states.append(y.copy())
                path.norms.append(norm)
                next_index += 1
            if next_index < grid.shape[0]:
                jacobian = system.jacobian(t, y)

    if path.settle_time is not None:
        # the settled state is held constant up to t_end
        if path.times[-1] < path.settle_time < grid[next_index]:
            path.times.append(path.settle_time)
            path.states.append(y.copy())
            path.norms.append(norm)
        for sample_time in grid[next_index:]:
            path.times.append(float(sample_time))
            path.states.append(y.copy())
            path.norms.append(norm)

    stats.linear_solves = stepper.linear_solves + system.linear_solves
    stats.fallback_solves = system.fallback_solves
    return path


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    t: float
    z: np.ndarray
    w: np.ndarray
    residual_norm: float
    x: np.ndarray


@dataclass(eq=False)
class Trajectory:
    """Sampled flow states with residual norms and the recovered x(t)."""

    samples: List[TrajectorySample]
    settle_time: Optional[float]
    stats: IntegrationStats
    T_p: float
    k: float
    eps_stop: float

    @property
    def settled(self) -> bool:
        return self.settle_time is not None

    @property
    def times(self) -> np.ndarray:
        return np.array([sample.t for sample in self.samples])

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([sample.residual_norm for sample in self.samples])

    @property
    def x_path(self) -> np.ndarray:
        return np.array([sample.x for sample in self.samples])

    @property
    def min_z(self) -> np.ndarray:
        return np.array([sample.z.min() for sample in self.samples])

    @property
    def min_w(self) -> np.ndarray:
        return np.array([sample.w.min() for sample in self.samples])

    @property
    def final(self) -> TrajectorySample:
        return self.samples[-1]

    def error_curve(self, x_star: np.ndarray) -> np.ndarray:
        """Euclidean distance of x(t) from a reference minimizer at each sample."""
        return np.linalg.norm(self.x_path - np.asarray(x_star)[None, :], axis=1)


def integrate_flow(
    nnqp: NnqpProblem,
    init: FlowState,
    params: FlowParams,
    sample_times: Optional[Sequence[float]] = None,
) -> Trajectory:
    """
    Integrate the KKT flow from ``init`` over [0, T_p].

    Raises:
        ValueError: if init is not strictly positive or samples leave [0, T_p]
        StepSizeUnderflowError: on step-size underflow
        SingularSystemError: on linear-solve failure, with the flow time
    """
    if not init.is_strictly_positive():
        raise ValueError("Initial state must be strictly positive in every entry")
    if sample_times is None:
        sample_times = np.linspace(0.0, params.T_p, settings.SAMPLE_COUNT)

    start = time.monotonic()
    system = KktFlowSystem(nnqp, k=params.k, eps_stop=params.eps_stop)
    path = integrate_path(
        system,
        init.vector,
        t_end=params.T_p,
        sample_times=sample_times,
        rtol=params.rtol,
        atol=params.atol,
        max_step=params.max_step,
        tol_nn=params.tol_nn,
    )

    n = nnqp.size
    samples = [
        TrajectorySample(
            t=t,
            z=state[:n],
            w=state[n:],
            residual_norm=norm,
            x=recover_solution(nnqp, state[:n]),
        )
        for t, state, norm in zip(path.times, path.states, path.norms)
    ]
    logger.debug(
        "Flow integrated",
        **make_run_context(
            start_time=start,
            T_p=params.T_p,
            settle_time=path.settle_time,
            steps=path.stats.steps,
            rejected=path.stats.rejected_steps,
        ),
    )
    return Trajectory(
        samples=samples,
        settle_time=path.settle_time,
        stats=path.stats,
        T_p=params.T_p,
        k=params.k,
        eps_stop=params.eps_stop,
    )


@dataclass(eq=False)
class NewtonFlowResult:
    times: np.ndarray
    states: np.ndarray
    grad_norms: np.ndarray
    settle_time: Optional[float]
    stats: IntegrationStats

    @property
    def x_final(self) -> np.ndarray:
        return self.states[-1]


def integrate_newton_flow(
    grad: Callable[[np.ndarray], np.ndarray],
    hessian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    params: FlowParams,
    sample_times: Optional[Sequence[float]] = None,
) -> NewtonFlowResult:
    """Integrate the unconstrained Newton fixed-time flow over [0, T_p]."""
    if sample_times is None:
        sample_times = np.linspace(0.0, params.T_p, settings.SAMPLE_COUNT)
    system = NewtonFlowSystem(grad, hessian, k=params.k, eps_stop=params.eps_stop)
    path = integrate_path(
        system,
        np.asarray(x0, dtype=float),
        t_end=params.T_p,
        sample_times=sample_times,
        rtol=params.rtol,
        atol=params.atol,
        max_step=params.max_step,
    )
    return NewtonFlowResult(
        times=np.array(path.times),
        states=np.array(path.states),
        grad_norms=np.array(path.norms),
        settle_time=path.settle_time,
        stats=path.stats,
    )
