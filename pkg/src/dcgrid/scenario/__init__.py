"""Scenario sampling, screening, libraries and controller evaluation."""

from dcgrid.scenario.evaluation import (
    EVAL_COLUMNS,
    EvalRow,
    EvaluationError,
    evaluate_controllers,
    format_table,
    rows_to_csv,
    summarize,
)
from dcgrid.scenario.library import (
    ScenarioLibrary,
    ScreeningConfig,
    ScreeningResult,
    build_library,
    default_workers,
    screen_scenario,
    screening_decision,
    violation_type,
)
from dcgrid.scenario.model import SHAPES, Profile, Scenario, canonical_scenario, empty_scenario
from dcgrid.scenario.sampling import SamplingConfig, sample_scenario

__all__ = [
    "EVAL_COLUMNS",
    "SHAPES",
    "EvalRow",
    "EvaluationError",
    "Profile",
    "SamplingConfig",
    "Scenario",
    "ScenarioLibrary",
    "ScreeningConfig",
    "ScreeningResult",
    "build_library",
    "canonical_scenario",
    "default_workers",
    "empty_scenario",
    "evaluate_controllers",
    "format_table",
    "rows_to_csv",
    "sample_scenario",
    "screen_scenario",
    "screening_decision",
    "summarize",
    "violation_type",
]
