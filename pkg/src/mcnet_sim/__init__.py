"""Discrete-event model of mixed-criticality traffic on a two-host link."""

from .config import ConfigError, ScenarioConfig, load_scenario, scenario
from .engine import Engine, derive_seed
from .experiment import RunResult, run_experiment, sweep
from .metrics import describe, summarize
from .trends import verify_trends

__all__ = [
    "ConfigError", "Engine", "RunResult", "ScenarioConfig", "derive_seed", "describe",
    "load_scenario", "run_experiment", "scenario", "summarize", "sweep", "verify_trends",
]
__version__ = "0.1.0"
