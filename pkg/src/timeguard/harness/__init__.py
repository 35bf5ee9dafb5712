"""Scenario loading, the epoch loop, persisted outputs and sweeps."""

from .config import ConfigError, ScenarioConfig, load_scenario, scenario_from_dict, set_dotted
from .report import emit_report, load_jsonl, load_report, write_run
from .runner import RunReport, RunResult, calibrate, run_scenario
from .sweep import SweepCell, expand_grid, sweep, sweep_csv

__all__ = [
    "ConfigError",
    "RunReport",
    "RunResult",
    "ScenarioConfig",
    "SweepCell",
    "calibrate",
    "emit_report",
    "expand_grid",
    "load_jsonl",
    "load_report",
    "load_scenario",
    "run_scenario",
    "scenario_from_dict",
    "set_dotted",
    "sweep",
    "sweep_csv",
    "write_run",
]
