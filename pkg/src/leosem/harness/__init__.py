"""Configuration, experiment drivers, output emission and the command line."""
from .config import ExperimentSettings, ScenarioConfig, default_config_path
from .experiments import (ExperimentKind, ExperimentResult, ExperimentSpec, child_seed,
                          run_delay_weight_sweep, run_mode_level_breakdown, run_power_sweep)

__all__ = [
    "ExperimentKind", "ExperimentResult", "ExperimentSettings", "ExperimentSpec", "ScenarioConfig",
    "child_seed", "default_config_path", "run_delay_weight_sweep", "run_mode_level_breakdown",
    "run_power_sweep",
]
