"""Scenario files, the closed-loop runner and its outputs."""

from .runner import RunMetrics, RunResult, compute_metrics, ground_truth_box, run_grid_error_map, run_scenario
from .scenario import PRESETS, Scenario, load_preset, load_scenario, scenario_from_dict

__all__ = [
    "PRESETS",
    "RunMetrics",
    "RunResult",
    "Scenario",
    "compute_metrics",
    "ground_truth_box",
    "load_preset",
    "load_scenario",
    "run_grid_error_map",
    "run_scenario",
    "scenario_from_dict",
]
