"""Experiment configuration and report schemas."""

from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator

from app.core.config import settings

# Settling times and initial-condition scales of the two reference experiments
DEFAULT_SETTLING_TIMES = [1.0, 0.8, 0.6, 0.4, 0.2, 0.1]
DEFAULT_INIT_SCALES = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]

FIGURE_NOTE = (
    "Plots are emitted per instance and as an overlay of all instances; "
    "no single representative instance is selected."
)


class ExperimentKind(str, Enum):
    PRESCRIBED_TIMES = "prescribed_times"
    INITIAL_CONDITIONS = "initial_conditions"
    SINGLE = "single"


class _IntegratorTolerances(BaseModel):
    rtol: float = Field(default_factory=lambda: settings.DEFAULT_RTOL, gt=0)
    atol: float = Field(default_factory=lambda: settings.DEFAULT_ATOL, gt=0)
    eps_stop: float = Field(default_factory=lambda: settings.DEFAULT_EPS_STOP, gt=0)
    sample_count: int = Field(default_factory=lambda: settings.SAMPLE_COUNT, ge=2)


class ExperimentConfig(_IntegratorTolerances):
    """
    Parameters of a batch over seeded random instances.

    Every run pairs one instance with one (T_p, init_scale) setting. When a
    list is omitted it takes the experiment's reference values; an explicitly
    empty list is rejected.
    """

    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    experiment: ExperimentKind = Field(..., description="Which experiment to run")
    n_x: int = Field(default=10, gt=0, description="Number of unknowns")
    m: int = Field(default=20, gt=0, description="Number of observations")
    tau: float = Field(default=1.0, gt=0)
    rho: float = Field(default=0.1, gt=0)
    n_problems: int = Field(default=100, gt=0)
    seed: int = Field(default=42, ge=0, le=2**64 - 1)
    T_p_list: Optional[List[PositiveFloat]] = None
    init_scales: Optional[List[PositiveFloat]] = None
    output_dir: Path = Field(default_factory=lambda: Path(settings.OUTPUT_DIR))
    workers: int = Field(default=0, ge=0, description="Worker processes (0 = settings)")
    oracle_tol: float = Field(default_factory=lambda: settings.ORACLE_TOL, gt=0)

    @model_validator(mode="after")
    def fill_settings(self) -> "ExperimentConfig":
        if self.experiment == ExperimentKind.PRESCRIBED_TIMES:
            if self.T_p_list is None:
                self.T_p_list = list(DEFAULT_SETTLING_TIMES)
            if self.init_scales is None:
                self.init_scales = [1.0]
            if not self.T_p_list:
                raise ValueError("prescribed_times requires a nonempty T_p_list")
        elif self.experiment == ExperimentKind.INITIAL_CONDITIONS:
            if self.init_scales is None:
                self.init_scales = list(DEFAULT_INIT_SCALES)
            if self.T_p_list is None:
                self.T_p_list = [1.0]
            if not self.init_scales:
                raise ValueError("initial_conditions requires nonempty init_scales")
        else:
            self.T_p_list = self.T_p_list if self.T_p_list is not None else [1.0]
            self.init_scales = self.init_scales if self.init_scales is not None else [1.0]
            if len(self.T_p_list) != 1 or len(self.init_scales) != 1:
                raise ValueError("single requires exactly one T_p and one init scale")
        if not self.T_p_list or not self.init_scales:
            raise ValueError("T_p_list and init_scales cannot be empty")
        return self

    @property
    def resolved_workers(self) -> int:
        return self.workers or settings.WORKER_COUNT

    def run_settings(self) -> List[tuple[float, float]]:
        """(T_p, init_scale) pairs in run order."""
        return [
            (T_p, scale)
            for T_p in (self.T_p_list or [])
            for scale in (self.init_scales or [])
        ]


class SolveConfig(_IntegratorTolerances):
    """Parameters of a single solve of a problem file."""

    model_config = ConfigDict(extra="forbid")

    problem: Path
    T_p: PositiveFloat
    init_scale: PositiveFloat = 1.0
    output_dir: Path = Field(default_factory=lambda: Path(settings.OUTPUT_DIR))
    oracle_tol: float = Field(default_factory=lambda: settings.ORACLE_TOL, gt=0)


class GenConfig(BaseModel):
    """Parameters of one generated problem file."""

    model_config = ConfigDict(extra="forbid")

    n_x: int = Field(default=10, gt=0)
    m: int = Field(default=20, gt=0)
    tau: float = Field(default=1.0, gt=0)
    rho: float = Field(default=0.1, gt=0)
    seed: int = Field(default=0, ge=0, le=2**64 - 1)
    out: Path


class CheckConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_problems: int = Field(default=100, gt=0)
    seed: int = Field(default=42, ge=0, le=2**64 - 1)
    workers: int = Field(default=0, ge=0)
    output_dir: Optional[Path] = None


class RunRecord(BaseModel):
    """Outcome of one (instance, T_p, init_scale) run."""

    problem_id: int
    T_p: float
    init_scale: float
    k: float
    status: Literal["ok", "failed"] = "ok"
    settled: bool = False
    settle_time: Optional[float] = None
    predicted_settle_time: Optional[float] = None
    initial_residual_norm: Optional[float] = None
    final_error: Optional[float] = Field(
        default=None, description="max-norm distance of x(T_p) from the oracle minimizer"
    )
    final_residual_norm: Optional[float] = None
    min_z: Optional[float] = None
    min_w: Optional[float] = None
    max_norm_law_deviation: Optional[float] = None
    steps: int = 0
    rejected_steps: int = 0
    linear_solves: int = 0
    fallback_solves: int = 0
    oracle_iterations: int = 0
    objective: Optional[float] = None
    x_final: Optional[List[float]] = None
    csv_path: Optional[str] = None
    error: Optional[str] = None


class CriterionResult(BaseModel):
    name: str
    description: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class AggregateSummary(BaseModel):
    n_runs: int
    n_failed: int
    max_final_error: Optional[float] = None
    max_settle_time: Optional[float] = None
    max_settle_fraction: Optional[float] = Field(
        default=None, description="Largest settle_time / T_p over settled runs"
    )
    max_settle_prediction_error: Optional[float] = None
    min_state_entry: Optional[float] = None
    criteria: List[CriterionResult] = Field(default_factory=list)
    passed: bool = False


class ExperimentReport(BaseModel):
    schema_version: str = Field(default_factory=lambda: settings.REPORT_SCHEMA_VERSION)
    experiment: ExperimentKind
    config: Union[ExperimentConfig, SolveConfig]
    runs: List[RunRecord]
    summary: AggregateSummary
    plots: List[str] = Field(default_factory=list)
    figure_note: str = FIGURE_NOTE


class AcceptanceReport(BaseModel):
    schema_version: str = Field(default_factory=lambda: settings.REPORT_SCHEMA_VERSION)
    n_problems: int
    criteria: List[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(criterion.passed for criterion in self.criteria)
