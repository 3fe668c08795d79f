"""Schema exports for files, configs and reports."""

from .experiment import (
    AcceptanceReport,
    AggregateSummary,
    CheckConfig,
    CriterionResult,
    ExperimentConfig,
    ExperimentKind,
    ExperimentReport,
    GenConfig,
    RunRecord,
    SolveConfig,
)
from .problem import ProblemFile

__all__ = [
    # Problem files
    "ProblemFile",
    # Experiments
    "ExperimentKind",
    "ExperimentConfig",
    "SolveConfig",
    "GenConfig",
    "CheckConfig",
    "RunRecord",
    "CriterionResult",
    "AggregateSummary",
    "ExperimentReport",
    "AcceptanceReport",
]
