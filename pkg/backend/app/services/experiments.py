"""
Batch experiments over seeded random elastic-net instances.

Each instance is generated from ``seed + problem_id``, solved once by the prox
oracle and then integrated for every (T_p, init_scale) setting of the
config. Instances run in a process pool; records are merged in problem-id
order so the output does not depend on the worker count.
"""

import math
import time
from concurrent.futures import Future, ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.core.logging import get_logger, make_run_context
from app.schemas.experiment import (
    AggregateSummary,
    CriterionResult,
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    RunRecord,
    SolveConfig,
)
from app.services.export import (
    CurveSeries,
    export_csv,
    export_empty_csv,
    render_svg,
    write_report_json,
)
from app.services.lasso.exceptions import LassoError, OracleError
from app.services.lasso.flow import (
    FlowParams,
    FlowState,
    analytic_settling_time,
    kkt_residual,
)
from app.services.lasso.integrate import Trajectory, integrate_flow
from app.services.lasso.oracle import solve_prox
from app.services.lasso.problem import (
    LassoProblem,
    NnqpProblem,
    build_nnqp,
    elastic_net_objective,
    load_problem,
)
from app.utils.performance import timing_decorator

logger = get_logger(__name__)

__all__ = [
    "FINAL_ERROR_LIMIT",
    "SETTLE_PREDICTION_LIMIT",
    "NORM_LAW_LIMIT",
    "NONNEGATIVITY_LIMIT",
    "RunOutcome",
    "gen_instance",
    "norm_law_deviation",
    "execute_run",
    "run_batch",
    "run_experiment_1",
    "run_experiment_2",
    "run_single",
    "summarize_runs",
]

FINAL_ERROR_LIMIT = 1e-6
SETTLE_PREDICTION_LIMIT = 1e-4
NORM_LAW_LIMIT = 1e-6
NONNEGATIVITY_LIMIT = -1e-9


def gen_instance(n_x: int, m: int, tau: float, rho: float, seed: int) -> LassoProblem:
    """Instance with i.i.d. standard normal A (m x n_x) and b drawn from ``seed``."""
    if n_x <= 0 or m <= 0:
        raise ValueError(f"n_x and m must be positive, got n_x={n_x}, m={m}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n_x))
    b = rng.standard_normal(m)
    return LassoProblem(A=A, b=b, tau=tau, rho=rho)


def norm_law_deviation(traj: Trajectory, initial_norm: float) -> float:
    """
    Largest gap between arctan ||u(t)|| and arctan ||u(0)|| - k t over the
    samples taken before the flow settled.
    """
    times = traj.times
    norms = traj.residual_norms
    active = norms > traj.eps_stop
    if traj.settle_time is not None:
        active &= times < traj.settle_time
    if not np.any(active):
        return 0.0
    predicted = math.atan(initial_norm) - traj.k * times[active]
    return float(np.max(np.abs(np.arctan(norms[active]) - predicted)))


def _csv_name(problem_id: int, T_p: float, init_scale: float) -> str:
    return f"problem_{problem_id:03d}_tp_{T_p:g}_init_{init_scale:g}.csv"


def _csv_path(
    config: ExperimentConfig, problem_id: int, T_p: float, init_scale: float
) -> Path:
    return config.output_dir / "trajectories" / _csv_name(problem_id, T_p, init_scale)


def _write_failed_csv(record: RunRecord, csv_path: Optional[Path]) -> None:
    if csv_path is None:
        return
    try:
        record.csv_path = str(export_empty_csv(csv_path))
    except OSError as e:
        logger.warning(
            "Could not write trajectory CSV", path=str(csv_path), error=str(e)
        )


def _setting_label(kind: ExperimentKind, T_p: float, init_scale: float) -> str:
    if kind == ExperimentKind.INITIAL_CONDITIONS:
        return f"init={init_scale:g}"
    return f"T_p={T_p:g}"


@dataclass(eq=False)
class RunOutcome:
    record: RunRecord
    times: Optional[np.ndarray] = None
    errors: Optional[np.ndarray] = None


def execute_run(
    problem: LassoProblem,
    nnqp: NnqpProblem,
    x_star: np.ndarray,
    problem_id: int,
    T_p: float,
    init_scale: float,
    tolerances: ExperimentConfig | SolveConfig,
    csv_path: Optional[Path] = None,
    keep_solution: bool = False,
) -> RunOutcome:
    """
    Integrate one setting and measure it against the oracle minimizer.

    Failures of the flow or the export are recorded in the returned record
    instead of raised.
    A failed run still gets a header-only CSV at ``csv_path``.
    """
    params = FlowParams.from_settling_time(
        T_p, rtol=tolerances.rtol, atol=tolerances.atol, eps_stop=tolerances.eps_stop
    )
    record = RunRecord(problem_id=problem_id, T_p=T_p, init_scale=init_scale, k=params.k)
    start = time.monotonic()
    try:
        init = FlowState.uniform(nnqp.size, init_scale)
        initial_norm = kkt_residual(nnqp, init).norm
        record.initial_residual_norm = initial_norm
        record.predicted_settle_time = analytic_settling_time(initial_norm, params.k)

        traj = integrate_flow(
            nnqp,
            init,
            params,
            sample_times=np.linspace(0.0, T_p, tolerances.sample_count),
        )
        errors = traj.error_curve(x_star)
        final = traj.final
        record.settled = traj.settled
        record.settle_time = traj.settle_time
        record.final_error = float(np.max(np.abs(final.x - x_star)))
        record.final_residual_norm = final.residual_norm
        record.objective = elastic_net_objective(problem, final.x)
        if keep_solution:
            record.x_final = final.x.tolist()
        record.min_z = float(traj.min_z.min())
        record.min_w = float(traj.min_w.min())
        record.max_norm_law_deviation = norm_law_deviation(traj, initial_norm)
        record.steps = traj.stats.steps
        record.rejected_steps = traj.stats.rejected_steps
        record.linear_solves = traj.stats.linear_solves
        record.fallback_solves = traj.stats.fallback_solves
        if csv_path is not None:
            export_csv(traj, csv_path, x_star)
            record.csv_path = str(csv_path)
    except (LassoError, ValueError, OSError) as e:
        record.status = "failed"
        record.error = f"{type(e).__name__}: {e}"
        _write_failed_csv(record, csv_path)
        logger.warning(
            "Run failed",
            **make_run_context(
                problem_id=problem_id,
                start_time=start,
                T_p=T_p,
                init_scale=init_scale,
                error=record.error,
                flow_time=getattr(e, "flow_time", None),
            ),
        )
        return RunOutcome(record=record)

    logger.debug(
        "Run finished",
        **make_run_context(
            problem_id=problem_id,
            start_time=start,
            T_p=T_p,
            init_scale=init_scale,
            settle_time=record.settle_time,
            final_error=record.final_error,
        ),
    )
    return RunOutcome(record=record, times=traj.times, errors=errors)


def _failed_outcomes(
    config: ExperimentConfig, problem_id: int, message: str
) -> List[RunOutcome]:
    outcomes = []
    for T_p, scale in config.run_settings():
        record = RunRecord(
            problem_id=problem_id,
            T_p=T_p,
            init_scale=scale,
            k=math.pi / (2.0 * T_p),
            status="failed",
            error=message,
        )
        _write_failed_csv(record, _csv_path(config, problem_id, T_p, scale))
        outcomes.append(RunOutcome(record=record))
    return outcomes


def _run_instance(config: ExperimentConfig, problem_id: int) -> List[RunOutcome]:
    """Worker entry point: every setting of the config on one instance."""
    problem = gen_instance(
        config.n_x, config.m, config.tau, config.rho, config.seed + problem_id
    )
    oracle = solve_prox(problem, tol=config.oracle_tol)
    if not oracle.converged:
        return _failed_outcomes(
            config,
            problem_id,
            f"OracleError: prox oracle did not converge in {oracle.iterations} iterations",
        )

    nnqp = build_nnqp(problem)
    outcomes = []
    for T_p, scale in config.run_settings():
        outcome = execute_run(
            problem,
            nnqp,
            oracle.x,
            problem_id,
            T_p,
            scale,
            config,
            csv_path=_csv_path(config, problem_id, T_p, scale),
        )
        outcome.record.oracle_iterations = oracle.iterations
        outcomes.append(outcome)
    return outcomes


def _collect(config: ExperimentConfig) -> List[RunOutcome]:
    problem_ids = range(config.n_problems)
    workers = min(config.resolved_workers, config.n_problems)
    by_problem: Dict[int, List[RunOutcome]] = {}

    if workers <= 1:
        for problem_id in problem_ids:
            by_problem[problem_id] = _run_instance(config, problem_id)
    else:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures: Dict[int, Future] = {
                problem_id: executor.submit(_run_instance, config, problem_id)
                for problem_id in problem_ids
            }
            for problem_id, future in futures.items():
                try:
                    by_problem[problem_id] = future.result()
                except Exception as e:
                    logger.error(
                        "Instance worker failed", problem_id=problem_id, error=str(e)
                    )
                    by_problem[problem_id] = _failed_outcomes(
                        config, problem_id, f"{type(e).__name__}: {e}"
                    )

    return [outcome for problem_id in problem_ids for outcome in by_problem[problem_id]]


def _criterion(
    name: str,
    description: str,
    value: Optional[float],
    threshold: float,
    passed: bool,
    detail: str = "",
) -> CriterionResult:
    return CriterionResult(
        name=name,
        description=description,
        passed=passed,
        value=value,
        threshold=threshold,
        detail=detail,
    )


def summarize_runs(records: Sequence[RunRecord]) -> AggregateSummary:
    """Aggregate statistics and pass/fail of the per-run criteria."""
    ok = [record for record in records if record.status == "ok"]
    settled = [record for record in ok if record.settle_time is not None]
    final_errors = [record.final_error for record in ok if record.final_error is not None]
    prediction_errors = [
        abs(record.settle_time - record.predicted_settle_time)
        for record in settled
        if record.settle_time is not None and record.predicted_settle_time is not None
    ]
    state_minima = [
        min(record.min_z, record.min_w)
        for record in ok
        if record.min_z is not None and record.min_w is not None
    ]
    deviations = [
        record.max_norm_law_deviation
        for record in ok
        if record.max_norm_law_deviation is not None
    ]

    max_final_error = max(final_errors) if final_errors else None
    max_prediction_error = max(prediction_errors) if prediction_errors else None
    min_state = min(state_minima) if state_minima else None
    max_deviation = max(deviations) if deviations else None
    late = [
        record
        for record in ok
        if record.settle_time is None or record.settle_time > record.T_p
    ]
    n_failed = len(records) - len(ok)

    criteria = [
        _criterion(
            "runs_completed",
            "every run finished without an oracle or integration failure",
            float(n_failed),
            0.0,
            n_failed == 0,
        ),
        _criterion(
            "final_error",
            "max-norm error of x(T_p) against the oracle",
            max_final_error,
            FINAL_ERROR_LIMIT,
            max_final_error is not None and max_final_error <= FINAL_ERROR_LIMIT,
        ),
        _criterion(
            "settled_by_T_p",
            "every run settled no later than its T_p",
            float(len(late)),
            0.0,
            bool(ok) and not late,
            detail=", ".join(
                f"problem {record.problem_id} T_p={record.T_p:g}" for record in late[:10]
            ),
        ),
        _criterion(
            "settle_prediction",
            "measured settle time against arctan(||u(0)||)/k",
            max_prediction_error,
            SETTLE_PREDICTION_LIMIT,
            max_prediction_error is not None
            and max_prediction_error <= SETTLE_PREDICTION_LIMIT,
        ),
        _criterion(
            "norm_law",
            "deviation of arctan ||u(t)|| from its linear decay before settling",
            max_deviation,
            NORM_LAW_LIMIT,
            max_deviation is not None and max_deviation <= NORM_LAW_LIMIT,
        ),
        _criterion(
            "nonnegativity",
            "smallest entry of z and w over all samples",
            min_state,
            NONNEGATIVITY_LIMIT,
            min_state is not None and min_state >= NONNEGATIVITY_LIMIT,
        ),
    ]

    return AggregateSummary(
        n_runs=len(records),
        n_failed=n_failed,
        max_final_error=max_final_error,
        max_settle_time=max((r.settle_time for r in settled if r.settle_time is not None), default=None),
        max_settle_fraction=max(
            (r.settle_time / r.T_p for r in settled if r.settle_time is not None),
            default=None,
        ),
        max_settle_prediction_error=max_prediction_error,
        min_state_entry=min_state,
        criteria=criteria,
        passed=all(criterion.passed for criterion in criteria),
    )


def _render_plots(
    config: ExperimentConfig, outcomes: Sequence[RunOutcome]
) -> List[str]:
    plot_dir = config.output_dir / "plots"
    kind = config.experiment
    by_problem: Dict[int, List[CurveSeries]] = {}
    overlay: List[CurveSeries] = []
    for outcome in outcomes:
        if outcome.times is None or outcome.errors is None:
            continue
        record = outcome.record
        series = CurveSeries(
            label=_setting_label(kind, record.T_p, record.init_scale),
            times=outcome.times,
            values=outcome.errors,
            T_p=record.T_p,
        )
        by_problem.setdefault(record.problem_id, []).append(series)
        overlay.append(series)

    plots = []
    for problem_id, series in by_problem.items():
        path = render_svg(
            series,
            plot_dir / f"problem_{problem_id:03d}.svg",
            title=f"{kind.value}: problem {problem_id}",
        )
        plots.append(str(path))
    if overlay:
        path = render_svg(
            overlay, plot_dir / "overlay.svg", title=f"{kind.value}: all instances"
        )
        plots.append(str(path))
    return plots


@timing_decorator
def run_batch(config: ExperimentConfig) -> ExperimentReport:
    """
    Run every (instance, setting) pair of the config and write the trajectory
    CSVs, SVG plots and ``report.json`` under ``config.output_dir``.
    """
    start = time.monotonic()
    config.output_dir.mkdir(parents=True, exist_ok=True)
    outcomes = _collect(config)
    records = [outcome.record for outcome in outcomes]
    summary = summarize_runs(records)

    report = ExperimentReport(
        experiment=config.experiment,
        config=config,
        runs=records,
        summary=summary,
        plots=_render_plots(config, outcomes),
    )
    write_report_json(report, config.output_dir / "report.json")
    logger.info(
        "Experiment finished",
        **make_run_context(
            start_time=start,
            experiment=config.experiment.value,
            runs=summary.n_runs,
            failed=summary.n_failed,
            max_final_error=summary.max_final_error,
            passed=summary.passed,
        ),
    )
    return report


def run_experiment_1(config: ExperimentConfig) -> ExperimentReport:
    """Prescribed settling times with init = 1 on every instance."""
    if config.experiment != ExperimentKind.PRESCRIBED_TIMES:
        raise ValueError(f"Experiment 1 needs prescribed_times, got {config.experiment.value}")
    return run_batch(config)


def run_experiment_2(config: ExperimentConfig) -> ExperimentReport:
    """Scaled initial conditions i * 1 with a shared T_p on every instance."""
    if config.experiment != ExperimentKind.INITIAL_CONDITIONS:
        raise ValueError(
            f"Experiment 2 needs initial_conditions, got {config.experiment.value}"
        )
    return run_batch(config)


def run_single(config: SolveConfig) -> ExperimentReport:
    """
    Solve one problem file at one (T_p, init_scale) and write its CSV, SVG
    and report under ``config.output_dir``.

    Raises:
        ProblemValidationError: if the problem file is invalid
        OracleError: if the prox oracle does not converge
    """
    problem = load_problem(config.problem)
    oracle = solve_prox(problem, tol=config.oracle_tol)
    if not oracle.converged:
        raise OracleError(
            f"Prox oracle did not converge in {oracle.iterations} iterations"
        )

    nnqp = build_nnqp(problem)
    output_dir = config.output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    outcome = execute_run(
        problem,
        nnqp,
        oracle.x,
        0,
        config.T_p,
        config.init_scale,
        config,
        csv_path=output_dir / "trajectory.csv",
        keep_solution=True,
    )
    record = outcome.record
    record.oracle_iterations = oracle.iterations

    plots = []
    if outcome.times is not None and outcome.errors is not None:
        plots.append(
            str(
                render_svg(
                    [
                        CurveSeries(
                            label=f"T_p={config.T_p:g}",
                            times=outcome.times,
                            values=outcome.errors,
                            T_p=config.T_p,
                        )
                    ],
                    output_dir / "error.svg",
                    title=f"{config.problem.name}",
                )
            )
        )

    report = ExperimentReport(
        experiment=ExperimentKind.SINGLE,
        config=config,
        runs=[record],
        summary=summarize_runs([record]),
        plots=plots,
    )
    write_report_json(report, output_dir / "report.json")
    return report
