"""
Tests for the trajectory CSV, report JSON and SVG writers.
"""

import json

import numpy as np
import pytest

from app.schemas.experiment import AggregateSummary, ExperimentKind, ExperimentReport, SolveConfig
from app.services.export import (
    CSV_COLUMNS,
    CurveSeries,
    export_csv,
    load_trajectory_csv,
    render_svg,
    trajectory_rows,
    write_report_json,
)
from app.services.lasso.flow import FlowState
from app.services.lasso.integrate import integrate_flow
from app.services.lasso.oracle import solve_prox


@pytest.fixture
def small_trajectory(small_nnqp, unit_params):
    return integrate_flow(
        small_nnqp,
        FlowState.uniform(small_nnqp.size),
        unit_params,
        sample_times=np.linspace(0.0, 1.0, 11),
    )


def _series(label, T_p, decay=1.0):
    times = np.linspace(0.0, T_p, 20)
    return CurveSeries(label=label, times=times, values=np.exp(-decay * times), T_p=T_p)


class TestTrajectoryCsv:
    """Test CSV export and reload."""

    def test_header_and_rows(self, tmp_path, small_trajectory, small_problem):
        x_star = solve_prox(small_problem).x
        path = export_csv(small_trajectory, tmp_path / "out" / "trajectory.csv", x_star)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(small_trajectory.samples)

    def test_reload_preserves_values(self, tmp_path, small_trajectory, small_problem):
        x_star = solve_prox(small_problem).x
        path = export_csv(small_trajectory, tmp_path / "trajectory.csv", x_star)
        columns = load_trajectory_csv(path)
        np.testing.assert_array_equal(columns["t"], small_trajectory.times)
        np.testing.assert_array_equal(
            columns["residual_norm"], small_trajectory.residual_norms
        )
        np.testing.assert_array_equal(
            columns["error_vs_oracle"], small_trajectory.error_curve(x_star)
        )

    def test_error_column_without_reference(self, small_trajectory):
        rows = trajectory_rows(small_trajectory)
        assert rows.shape == (len(small_trajectory.samples), len(CSV_COLUMNS))
        assert np.all(np.isnan(rows[:, 2]))

    def test_unwritable_path_names_file(self, tmp_path, small_trajectory):
        blocker = tmp_path / "blocker"
        blocker.write_text("")
        with pytest.raises(OSError) as exc_info:
            export_csv(small_trajectory, blocker / "trajectory.csv")
        assert "blocker" in str(exc_info.value)


class TestReportJson:
    def test_written_report_is_valid_json(self, tmp_path):
        report = ExperimentReport(
            experiment=ExperimentKind.SINGLE,
            config=SolveConfig(problem=tmp_path / "p.json", T_p=1.0, output_dir=tmp_path),
            runs=[],
            summary=AggregateSummary(n_runs=0, n_failed=0),
        )
        path = write_report_json(report, tmp_path / "report.json")
        document = json.loads(path.read_text())
        assert document["experiment"] == "single"
        assert document["config"]["T_p"] == 1.0
        assert "figure_note" in document


class TestRenderSvg:
    """Test the log-scale SVG plot."""

    def test_one_curve_and_marker_per_setting(self, tmp_path):
        settling_times = [1.0, 0.8, 0.6, 0.4, 0.2, 0.1]
        series = [_series(f"T_p={T_p:g}", T_p) for T_p in settling_times]
        path = render_svg(series, tmp_path / "plot.svg", title="errors")
        document = path.read_text()
        assert document.count('class="curve"') == 6
        assert document.count('class="tp-marker"') == 6
        for T_p in settling_times:
            assert f"T_p={T_p:g}" in document

    def test_shared_settling_time_has_one_marker(self, tmp_path):
        series = [_series(f"init={scale}", 1.0, decay=scale) for scale in range(1, 7)]
        document = render_svg(series, tmp_path / "plot.svg").read_text()
        assert document.count('class="curve"') == 6
        assert document.count('class="tp-marker"') == 1

    def test_repeated_labels_share_legend_entry(self, tmp_path):
        series = [_series("T_p=1", 1.0), _series("T_p=1", 1.0, decay=2.0)]
        document = render_svg(series, tmp_path / "plot.svg").read_text()
        assert document.count(">T_p=1</text>") == 1

    def test_zero_values_are_clamped(self, tmp_path):
        curve = CurveSeries(
            label="exact", times=np.array([0.0, 0.5, 1.0]), values=np.array([1.0, 0.0, 0.0]), T_p=1.0
        )
        document = render_svg([curve], tmp_path / "plot.svg").read_text()
        assert "1e-16" in document

    def test_empty_input_writes_nothing(self, tmp_path):
        path = tmp_path / "plot.svg"
        with pytest.raises(ValueError):
            render_svg([], path)
        empty = CurveSeries(label="x", times=np.array([]), values=np.array([]), T_p=1.0)
        with pytest.raises(ValueError):
            render_svg([empty], path)
        assert not path.exists()
