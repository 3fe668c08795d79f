"""
Artifact writers: trajectory CSV, report JSON and log-scale SVG plots.
"""

import html
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from app.core.logging import get_logger
from app.services.lasso.integrate import Trajectory

logger = get_logger(__name__)

__all__ = [
    "CSV_COLUMNS",
    "CurveSeries",
    "trajectory_rows",
    "export_csv",
    "export_empty_csv",
    "load_trajectory_csv",
    "render_svg",
    "write_report_json",
]

CSV_COLUMNS = ["t", "residual_norm", "error_vs_oracle", "min_z", "min_w"]

# plotted values below this are drawn at the floor of the log axis
LOG_FLOOR = 1e-16

_PALETTE = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
]


def _surface_io_error(error: OSError, path: Path) -> OSError:
    return type(error)(error.errno, f"{error.strerror or error}: {path}", str(path))


def trajectory_rows(traj: Trajectory, x_star: Optional[np.ndarray] = None) -> np.ndarray:
    """One row per sample with the CSV columns; error is NaN without a reference."""
    if x_star is None:
        errors = np.full(len(traj.samples), np.nan)
    else:
        errors = traj.error_curve(np.asarray(x_star, dtype=float))
    return np.column_stack(
        (traj.times, traj.residual_norms, errors, traj.min_z, traj.min_w)
    )


def export_csv(
    traj: Trajectory, path: str | Path, x_star: Optional[np.ndarray] = None
) -> Path:
    """
    Write a trajectory CSV with full round-trip precision.

    Raises:
        OSError: naming the path when the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            path,
            trajectory_rows(traj, x_star),
            delimiter=",",
            header=",".join(CSV_COLUMNS),
            comments="",
            fmt="%.17g",
        )
    except OSError as e:
        raise _surface_io_error(e, path) from e
    return path


def export_empty_csv(path: str | Path) -> Path:
    """Header-only trajectory CSV for a run that produced no samples."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(",".join(CSV_COLUMNS) + "\n", encoding="utf-8")
    except OSError as e:
        raise _surface_io_error(e, path) from e
    return path


def load_trajectory_csv(path: str | Path) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        with warnings.catch_warnings():
            # header-only files hold no rows
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as e:
        raise _surface_io_error(e, path) from e
    if data.size == 0:
        return {name: np.empty(0) for name in CSV_COLUMNS}
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def write_report_json(report: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    except OSError as e:
        raise _surface_io_error(e, path) from e
    return path


@dataclass(frozen=True, eq=False)
class CurveSeries:
    """One plotted curve; curves sharing a label share a color and legend entry."""

    label: str
    times: np.ndarray
    values: np.ndarray
    T_p: float


class _SvgCanvas:
    def __init__(self, width: int, height: int) -> None:
        self.width = width
        self.height = height
        self.parts: List[str] = [
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]

    def line(
        self, x1: float, y1: float, x2: float, y2: float, stroke: str, extra: str = ""
    ) -> None:
        self.parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{stroke}" {extra}/>'
        )

    def polyline(self, points: np.ndarray, stroke: str, css_class: str) -> None:
        coordinates = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.parts.append(
            f'<polyline class="{css_class}" points="{coordinates}" fill="none" '
            f'stroke="{stroke}" stroke-width="1.2"/>'
        )

    def text(self, x: float, y: float, content: str, extra: str = "") -> None:
        self.parts.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="12" '
            f"{extra}>{html.escape(content)}</text>"
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>", ""])


def render_svg(
    series: Sequence[CurveSeries],
    path: str | Path,
    title: str = "",
    metric: Literal["error", "residual"] = "error",
) -> Path:
    """
    Plot curves on a log10 y-axis against t, with a dashed marker at each
    distinct T_p and a legend with one entry per label.

    Raises:
        ValueError: on empty input; nothing is written
        OSError: naming the path when the file cannot be written
    """
    if not series or any(len(curve.times) == 0 for curve in series):
        raise ValueError("Cannot render an empty series")

    width, height = 720, 480
    left, right, top, bottom = 70, 170, 40, 50
    plot_width = width - left - right
    plot_height = height - top - bottom

    t_max = max(max(float(np.max(c.times)) for c in series), max(c.T_p for c in series))
    t_max = t_max if t_max > 0 else 1.0
    logs = [np.log10(np.maximum(np.asarray(c.values, dtype=float), LOG_FLOOR)) for c in series]
    finite = np.concatenate([values[np.isfinite(values)] for values in logs])
    if finite.size == 0:
        raise ValueError("Series contain no finite values")
    y_low = float(np.floor(finite.min()))
    y_high = float(np.ceil(finite.max()))
    if y_high == y_low:
        y_high = y_low + 1.0

    def to_x(t: np.ndarray) -> np.ndarray:
        return left + plot_width * np.asarray(t, dtype=float) / t_max

    def to_y(log_value: np.ndarray) -> np.ndarray:
        return top + plot_height * (y_high - np.asarray(log_value)) / (y_high - y_low)

    canvas = _SvgCanvas(width, height)
    if title:
        canvas.text(left, top - 15, title, 'font-weight="bold"')

    # axes and ticks
    canvas.line(left, top + plot_height, left + plot_width, top + plot_height, "black")
    canvas.line(left, top, left, top + plot_height, "black")
    for tick in np.linspace(0.0, t_max, 6):
        x = float(to_x(tick))
        canvas.line(x, top + plot_height, x, top + plot_height + 5, "black")
        canvas.text(x - 10, top + plot_height + 20, f"{tick:.2g}")
    decade_step = max(1, int(np.ceil((y_high - y_low) / 10)))
    for decade in np.arange(y_low, y_high + 0.5, decade_step):
        y = float(to_y(decade))
        canvas.line(left - 5, y, left, y, "black")
        canvas.line(left, y, left + plot_width, y, "#e0e0e0")
        canvas.text(left - 55, y + 4, f"1e{int(decade)}")
    canvas.text(left + plot_width / 2 - 5, height - 10, "t")
    y_label = "log10 ||x(t) - x*||" if metric == "error" else "log10 ||u(t)||"
    canvas.text(
        15,
        top + plot_height / 2,
        y_label,
        f'transform="rotate(-90 15 {top + plot_height / 2:.2f})" text-anchor="middle"',
    )

    labels: List[str] = []
    for curve in series:
        if curve.label not in labels:
            labels.append(curve.label)
    colors = {label: _PALETTE[i % len(_PALETTE)] for i, label in enumerate(labels)}

    for T_p in sorted({curve.T_p for curve in series}):
        x = float(to_x(T_p))
        canvas.line(
            x, top, x, top + plot_height, "#555555", 'class="tp-marker" stroke-dasharray="4,3"'
        )

    for curve, log_values in zip(series, logs):
        keep = np.isfinite(log_values)
        points = np.column_stack((to_x(np.asarray(curve.times)[keep]), to_y(log_values[keep])))
        canvas.polyline(points, colors[curve.label], "curve")

    for i, label in enumerate(labels):
        y = top + 10 + 18 * i
        x = left + plot_width + 15
        canvas.line(x, y, x + 20, y, colors[label], 'stroke-width="2"')
        canvas.text(x + 26, y + 4, label)

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canvas.render(), encoding="utf-8")
    except OSError as e:
        raise _surface_io_error(e, path) from e
    logger.debug("SVG written", path=str(path), curves=len(series))
    return path
