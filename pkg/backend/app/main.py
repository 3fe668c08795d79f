"""
Command-line entry point.

Usage:
    python -m app.main gen --nx 10 --m 20 --seed 7 --out problem.json
    python -m app.main solve --problem problem.json --tp 1.0 --out results/solve
    python -m app.main exp1 --nx 10 --m 20 --tau 1.0 --rho 0.1 --n 100 --seed 42 --out results/exp1
    python -m app.main exp2 --n 100 --seed 42 --out results/exp2
    python -m app.main check [--n-problems 20]

Every subcommand also accepts ``--config file.json``; values given as flags
override values from the file.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Type

from pydantic import BaseModel

from app.core.config import settings
from app.core.logging import get_logger, setup_logging
from app.schemas.experiment import (
    CheckConfig,
    ExperimentConfig,
    ExperimentKind,
    GenConfig,
    SolveConfig,
)
from app.services.acceptance import run_acceptance
from app.services.experiments import (
    gen_instance,
    run_experiment_1,
    run_experiment_2,
    run_single,
)
from app.services.lasso.problem import save_problem
from app.utils.error_handling import (
    EXIT_CHECK_FAILED,
    EXIT_OK,
    EXIT_USAGE,
    CommandError,
    with_error_handling,
)

logger = get_logger(__name__)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise CommandError(f"Config file not found: {path}", EXIT_USAGE) from e
    except json.JSONDecodeError as e:
        raise CommandError(f"Config file {path} is not valid JSON: {e}", EXIT_USAGE) from e
    if not isinstance(data, dict):
        raise CommandError(f"Config file {path} must contain a JSON object", EXIT_USAGE)
    return data


def merge_config(
    model: Type[BaseModel],
    file_values: Dict[str, Any],
    flag_values: Dict[str, Any],
) -> Any:  # noqa: ANN401
    """Validate file values overridden by the flags that were given."""
    merged = dict(file_values)
    merged.update({key: value for key, value in flag_values.items() if value is not None})
    return model.model_validate(merged)


def _tolerance_flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "rtol": args.rtol,
        "atol": args.atol,
        "eps_stop": args.eps_stop,
        "sample_count": args.samples,
    }


@with_error_handling("gen")
def command_gen(args: argparse.Namespace) -> int:
    config = merge_config(
        GenConfig,
        load_config_file(args.config),
        {
            "n_x": args.nx,
            "m": args.m,
            "tau": args.tau,
            "rho": args.rho,
            "seed": args.seed,
            "out": args.out,
        },
    )
    problem = gen_instance(config.n_x, config.m, config.tau, config.rho, config.seed)
    path = save_problem(problem, config.out)
    print(f"Problem written to {path} (m={problem.m}, n_x={problem.n_x})")
    return EXIT_OK


@with_error_handling("solve")
def command_solve(args: argparse.Namespace) -> int:
    config = merge_config(
        SolveConfig,
        load_config_file(args.config),
        {
            "problem": args.problem,
            "T_p": args.tp,
            "init_scale": args.init_scale,
            "output_dir": args.out,
            **_tolerance_flags(args),
        },
    )
    report = run_single(config)
    record = report.runs[0]
    if record.status != "ok":
        print(f"Solve failed: {record.error}")
        return EXIT_CHECK_FAILED
    print(f"x = {record.x_final}")
    print(f"objective = {record.objective:.12g}")
    print(f"settle time = {record.settle_time} (T_p = {record.T_p:g})")
    print(f"max-norm error vs oracle = {record.final_error:.3e}")
    print(f"Artifacts written to {config.output_dir}")
    return EXIT_OK


def _experiment_config(args: argparse.Namespace, kind: ExperimentKind) -> ExperimentConfig:
    return merge_config(
        ExperimentConfig,
        load_config_file(args.config),
        {
            "experiment": kind,
            "n_x": args.nx,
            "m": args.m,
            "tau": args.tau,
            "rho": args.rho,
            "n_problems": args.n,
            "seed": args.seed,
            "T_p_list": args.tp,
            "init_scales": args.init_scales,
            "output_dir": args.out,
            "workers": args.workers,
            **_tolerance_flags(args),
        },
    )


def _print_summary(report: Any) -> int:  # noqa: ANN401
    summary = report.summary
    print(f"{summary.n_runs} runs, {summary.n_failed} failed")
    for criterion in summary.criteria:
        status = "PASS" if criterion.passed else "FAIL"
        print(f"  [{status}] {criterion.name}: {criterion.value} (limit {criterion.threshold})")
    return EXIT_OK if summary.passed else EXIT_CHECK_FAILED


@with_error_handling("exp1")
def command_exp1(args: argparse.Namespace) -> int:
    report = run_experiment_1(_experiment_config(args, ExperimentKind.PRESCRIBED_TIMES))
    return _print_summary(report)


@with_error_handling("exp2")
def command_exp2(args: argparse.Namespace) -> int:
    report = run_experiment_2(_experiment_config(args, ExperimentKind.INITIAL_CONDITIONS))
    return _print_summary(report)


@with_error_handling("check")
def command_check(args: argparse.Namespace) -> int:
    config = merge_config(
        CheckConfig,
        load_config_file(args.config),
        {
            "n_problems": args.n_problems,
            "seed": args.seed,
            "workers": args.workers,
            "output_dir": args.out,
        },
    )
    report = run_acceptance(
        n_problems=config.n_problems,
        workers=config.workers,
        output_dir=config.output_dir,
        seed=config.seed,
    )
    for i, criterion in enumerate(report.criteria, start=1):
        status = "PASS" if criterion.passed else "FAIL"
        detail = f" ({criterion.detail})" if criterion.detail else ""
        print(f"{i}. [{status}] {criterion.name}: {criterion.value}{detail}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _add_tolerances(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rtol", type=float, help="Relative integration tolerance")
    parser.add_argument("--atol", type=float, help="Absolute integration tolerance")
    parser.add_argument("--eps-stop", type=float, help="Settling threshold on ||u||")
    parser.add_argument("--samples", type=int, help="Uniform samples on [0, T_p]")
    _add_config_flag(parser)


def _add_config_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with parameters; flags take precedence")


def _add_instance_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--nx", type=int, help="Number of unknowns")
    parser.add_argument("--m", type=int, help="Number of observations")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--rho", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lasso-flow",
        description="Prescribed-time elastic-net Lasso solver",
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    subcommands = parser.add_subparsers(dest="command", required=True)

    gen = subcommands.add_parser("gen", help="Generate a random problem file")
    _add_instance_flags(gen)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", help="Problem JSON path")
    _add_config_flag(gen)
    gen.set_defaults(handler=command_gen)

    solve = subcommands.add_parser("solve", help="Solve a problem file")
    solve.add_argument("--problem", help="Problem JSON path")
    solve.add_argument("--tp", type=float, help="Prescribed settling time")
    solve.add_argument("--init-scale", type=float, help="Initial z = w = scale * 1")
    solve.add_argument("--out", help="Output directory")
    _add_tolerances(solve)
    solve.set_defaults(handler=command_solve)

    for name, handler, help_text in (
        ("exp1", command_exp1, "Prescribed settling times experiment"),
        ("exp2", command_exp2, "Initial conditions experiment"),
    ):
        experiment = subcommands.add_parser(name, help=help_text)
        _add_instance_flags(experiment)
        experiment.add_argument("--n", type=int, help="Number of instances")
        experiment.add_argument("--seed", type=int)
        experiment.add_argument("--tp", type=float, nargs="+", help="Settling times")
        experiment.add_argument(
            "--init-scales", type=float, nargs="+", help="Initial condition scales"
        )
        experiment.add_argument("--workers", type=int, help="Worker processes")
        experiment.add_argument("--out", help="Output directory")
        _add_tolerances(experiment)
        experiment.set_defaults(handler=handler)

    check = subcommands.add_parser("check", help="Run the acceptance suite")
    check.add_argument("--n-problems", type=int)
    check.add_argument("--seed", type=int)
    check.add_argument("--workers", type=int)
    check.add_argument("--out", help="Keep experiment artifacts in this directory")
    _add_config_flag(check)
    check.set_defaults(handler=command_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    try:
        setup_logging(args.log_level)
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logger.debug("Command started", command=args.command, environment=settings.ENVIRONMENT)
    try:
        return int(args.handler(args))
    except CommandError as e:
        print(f"Error: {e.message}", file=sys.stderr)
        return e.exit_code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
