"""
Tests for instance generation, single solves and experiment batches.
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.config import settings
from app.schemas.experiment import (
    DEFAULT_INIT_SCALES,
    DEFAULT_SETTLING_TIMES,
    ExperimentConfig,
    ExperimentKind,
    RunRecord,
    SolveConfig,
)
from app.services.experiments import (
    execute_run,
    gen_instance,
    run_experiment_1,
    run_experiment_2,
    run_single,
    summarize_runs,
)
from app.services.export import load_trajectory_csv
from app.services.lasso.exceptions import OracleError
from app.services.lasso.oracle import solve_prox
from app.services.lasso.problem import build_nnqp, save_problem
from app.services.lasso.solver import solve_lasso, solve_lasso_with_trajectory


def _batch_config(tmp_path, kind, **overrides):
    values = {
        "experiment": kind,
        "n_x": 3,
        "m": 6,
        "n_problems": 2,
        "seed": 5,
        "workers": 1,
        "sample_count": 21,
        "output_dir": tmp_path,
    }
    values.update(overrides)
    return ExperimentConfig(**values)


def _comparable(record: RunRecord) -> dict:
    return record.model_dump(exclude={"csv_path"})


class TestGenInstance:
    def test_deterministic(self):
        first = gen_instance(10, 20, 1.0, 0.1, seed=3)
        second = gen_instance(10, 20, 1.0, 0.1, seed=3)
        np.testing.assert_array_equal(first.A, second.A)
        np.testing.assert_array_equal(first.b, second.b)

    def test_seeds_differ(self):
        first = gen_instance(4, 8, 1.0, 0.1, seed=3)
        second = gen_instance(4, 8, 1.0, 0.1, seed=4)
        assert not np.array_equal(first.A, second.A)

    def test_shapes_and_parameters(self):
        problem = gen_instance(10, 20, 0.5, 0.2, seed=1)
        assert problem.A.shape == (20, 10)
        assert problem.b.shape == (20,)
        assert (problem.tau, problem.rho) == (0.5, 0.2)
        assert np.linalg.matrix_rank(problem.A) == 10

    def test_rejects_empty_dimensions(self):
        with pytest.raises(ValueError):
            gen_instance(0, 20, 1.0, 0.1, seed=1)


class TestExperimentConfig:
    """Test default settings and validation of batch configs."""

    def test_prescribed_times_defaults(self, tmp_path):
        config = ExperimentConfig(experiment=ExperimentKind.PRESCRIBED_TIMES, output_dir=tmp_path)
        assert config.T_p_list == DEFAULT_SETTLING_TIMES
        assert config.init_scales == [1.0]
        assert config.n_x == 10 and config.m == 20 and config.n_problems == 100
        assert len(config.run_settings()) == 6

    def test_initial_conditions_defaults(self, tmp_path):
        config = ExperimentConfig(
            experiment=ExperimentKind.INITIAL_CONDITIONS, output_dir=tmp_path
        )
        assert config.init_scales == DEFAULT_INIT_SCALES
        assert config.T_p_list == [1.0]
        assert config.run_settings()[2] == (1.0, 3.0)

    @pytest.mark.parametrize(
        "overrides",
        [
            {"T_p_list": []},
            {"T_p_list": [0.0]},
            {"n_problems": 0},
            {"seed": -1},
            {"unknown": 1},
        ],
    )
    def test_invalid_values(self, tmp_path, overrides):
        with pytest.raises(ValidationError):
            _batch_config(tmp_path, ExperimentKind.PRESCRIBED_TIMES, **overrides)

    def test_single_requires_one_setting(self, tmp_path):
        with pytest.raises(ValidationError):
            _batch_config(tmp_path, ExperimentKind.SINGLE, T_p_list=[1.0, 0.5])


class TestSolveLasso:
    def test_scalar_instance(self, scalar_problem, scalar_minimizer):
        solution = solve_lasso(scalar_problem, T_p=1.0)
        assert solution.x[0] == pytest.approx(scalar_minimizer, abs=1e-6)
        assert solution.objective == pytest.approx(43.0 / 22.0, abs=1e-6)
        assert solution.kkt_residual_norm <= 1e-10

    def test_matches_prox_oracle(self, reference_problem):
        solution, trajectory = solve_lasso_with_trajectory(
            reference_problem, T_p=0.4, init_scale=2.0
        )
        assert trajectory.settled
        np.testing.assert_allclose(solution.x, solve_prox(reference_problem).x, atol=1e-6)

    def test_rejects_nonpositive_scale(self, scalar_problem):
        with pytest.raises(ValueError):
            solve_lasso(scalar_problem, T_p=1.0, init_scale=0.0)


class TestExecuteRun:
    def test_successful_run(self, tmp_path, small_problem):
        nnqp = build_nnqp(small_problem)
        x_star = solve_prox(small_problem).x
        config = SolveConfig(problem=tmp_path / "p.json", T_p=0.5, output_dir=tmp_path)
        outcome = execute_run(
            small_problem, nnqp, x_star, 7, 0.5, 1.0, config, keep_solution=True
        )
        record = outcome.record
        assert record.status == "ok"
        assert record.problem_id == 7
        assert record.settled and record.settle_time <= 0.5
        assert record.final_error <= 1e-6
        assert len(record.x_final) == small_problem.n_x
        assert len(outcome.times) == len(outcome.errors)

    def test_failure_is_recorded(self, tmp_path, small_problem):
        nnqp = build_nnqp(small_problem)
        config = SolveConfig(problem=tmp_path / "p.json", T_p=1.0, output_dir=tmp_path)
        outcome = execute_run(
            small_problem, nnqp, np.zeros(small_problem.n_x), 0, 1.0, -1.0, config
        )
        assert outcome.record.status == "failed"
        assert "ValueError" in outcome.record.error
        assert outcome.times is None

    def test_failure_writes_header_only_csv(self, tmp_path, small_problem):
        nnqp = build_nnqp(small_problem)
        config = SolveConfig(problem=tmp_path / "p.json", T_p=1.0, output_dir=tmp_path)
        csv_path = tmp_path / "trajectories" / "failed.csv"
        outcome = execute_run(
            small_problem,
            nnqp,
            np.zeros(small_problem.n_x),
            0,
            1.0,
            -1.0,
            config,
            csv_path=csv_path,
        )
        assert outcome.record.status == "failed"
        assert outcome.record.csv_path == str(csv_path)
        assert csv_path.read_text() == "t,residual_norm,error_vs_oracle,min_z,min_w\n"
        columns = load_trajectory_csv(csv_path)
        assert all(len(values) == 0 for values in columns.values())


class TestRunExperiments:
    """Test small batches end to end."""

    def test_experiment_1_artifacts(self, tmp_path):
        config = _batch_config(
            tmp_path, ExperimentKind.PRESCRIBED_TIMES, T_p_list=[1.0, 0.5]
        )
        report = run_experiment_1(config)

        assert [(r.problem_id, r.T_p) for r in report.runs] == [
            (0, 1.0),
            (0, 0.5),
            (1, 1.0),
            (1, 0.5),
        ]
        assert report.summary.n_failed == 0
        assert report.summary.passed
        for record in report.runs:
            assert record.settle_time <= record.T_p
            columns = load_trajectory_csv(record.csv_path)
            assert columns["t"][-1] == record.T_p

        assert (tmp_path / "trajectories" / "problem_001_tp_0.5_init_1.csv").exists()
        assert (tmp_path / "plots" / "problem_000.svg").exists()
        assert (tmp_path / "plots" / "overlay.svg").exists()
        document = json.loads((tmp_path / "report.json").read_text())
        assert document["experiment"] == "prescribed_times"
        assert len(document["runs"]) == 4

    def test_experiment_kind_is_checked(self, tmp_path):
        config = _batch_config(tmp_path, ExperimentKind.INITIAL_CONDITIONS)
        with pytest.raises(ValueError):
            run_experiment_1(config)
        with pytest.raises(ValueError):
            run_experiment_2(_batch_config(tmp_path, ExperimentKind.PRESCRIBED_TIMES))

    def test_unit_scale_matches_experiment_1(self, tmp_path):
        exp1 = run_experiment_1(
            _batch_config(tmp_path / "e1", ExperimentKind.PRESCRIBED_TIMES, T_p_list=[1.0])
        )
        exp2 = run_experiment_2(
            _batch_config(
                tmp_path / "e2", ExperimentKind.INITIAL_CONDITIONS, init_scales=[1.0, 2.0]
            )
        )
        unit_runs = [record for record in exp2.runs if record.init_scale == 1.0]
        assert [_comparable(r) for r in unit_runs] == [_comparable(r) for r in exp1.runs]

    def test_settle_times_follow_prediction(self, tmp_path):
        report = run_experiment_2(
            _batch_config(tmp_path, ExperimentKind.INITIAL_CONDITIONS, init_scales=[1.0, 4.0])
        )
        for record in report.runs:
            assert record.settle_time == pytest.approx(record.predicted_settle_time, abs=1e-4)

    def test_worker_count_does_not_change_results(self, tmp_path):
        serial = run_experiment_1(
            _batch_config(tmp_path / "serial", ExperimentKind.PRESCRIBED_TIMES, T_p_list=[0.6])
        )
        parallel = run_experiment_1(
            _batch_config(
                tmp_path / "parallel",
                ExperimentKind.PRESCRIBED_TIMES,
                T_p_list=[0.6],
                workers=2,
            )
        )
        assert [_comparable(r) for r in parallel.runs] == [_comparable(r) for r in serial.runs]


    def test_oracle_failure_keeps_one_csv_per_run(self, monkeypatch, tmp_path):
        monkeypatch.setattr(settings, "ORACLE_MAX_ITER", 1)
        report = run_experiment_1(
            _batch_config(tmp_path, ExperimentKind.PRESCRIBED_TIMES, T_p_list=[1.0, 0.5])
        )
        assert report.summary.n_failed == len(report.runs) == 4
        for record in report.runs:
            assert "OracleError" in record.error
            assert record.csv_path is not None
            assert load_trajectory_csv(record.csv_path)["t"].size == 0


class TestRunSingle:
    def test_writes_artifacts(self, tmp_path, small_problem):
        problem_path = save_problem(small_problem, tmp_path / "problem.json")
        out = tmp_path / "out"
        report = run_single(SolveConfig(problem=problem_path, T_p=0.8, output_dir=out))
        record = report.runs[0]
        assert report.experiment == ExperimentKind.SINGLE
        assert record.status == "ok"
        assert record.final_error <= 1e-6
        assert len(record.x_final) == small_problem.n_x
        for name in ("trajectory.csv", "error.svg", "report.json"):
            assert (out / name).exists()

    def test_oracle_failure_raises(self, monkeypatch, tmp_path, small_problem):
        monkeypatch.setattr(settings, "ORACLE_MAX_ITER", 1)
        problem_path = save_problem(small_problem, tmp_path / "problem.json")
        config = SolveConfig(problem=problem_path, T_p=1.0, output_dir=tmp_path)
        with pytest.raises(OracleError):
            run_single(config)


class TestSummarizeRuns:
    def _record(self, **overrides):
        values = {
            "problem_id": 0,
            "T_p": 1.0,
            "init_scale": 1.0,
            "k": np.pi / 2,
            "settled": True,
            "settle_time": 0.9,
            "predicted_settle_time": 0.9 + 1e-6,
            "final_error": 1e-9,
            "min_z": 0.0,
            "min_w": 1e-3,
            "max_norm_law_deviation": 1e-9,
        }
        values.update(overrides)
        return RunRecord(**values)

    def test_all_criteria_pass(self):
        summary = summarize_runs([self._record(), self._record(problem_id=1)])
        assert summary.passed
        assert summary.n_runs == 2
        assert summary.max_settle_fraction == pytest.approx(0.9)

    def test_failed_run_fails_summary(self):
        failed = RunRecord(
            problem_id=1, T_p=1.0, init_scale=1.0, k=np.pi / 2, status="failed", error="boom"
        )
        summary = summarize_runs([self._record(), failed])
        by_name = {criterion.name: criterion for criterion in summary.criteria}
        assert summary.n_failed == 1
        assert not by_name["runs_completed"].passed
        assert by_name["final_error"].passed
        assert not summary.passed

    def test_late_settle_is_reported(self):
        summary = summarize_runs([self._record(settle_time=None, settled=False)])
        by_name = {criterion.name: criterion for criterion in summary.criteria}
        assert not by_name["settled_by_T_p"].passed
        assert "problem 0" in by_name["settled_by_T_p"].detail

    def test_negative_state_fails_nonnegativity(self):
        summary = summarize_runs([self._record(min_z=-1e-6)])
        by_name = {criterion.name: criterion for criterion in summary.criteria}
        assert not by_name["nonnegativity"].passed
