"""Experiment harness: flat key = value configs, recipe runners with
deterministic parallel sweeps, CSV outputs, and a run manifest."""

from .config import ConfigError, ExperimentConfig, config_hash, load_config
from .recipes import RECIPES, RunResult, run_experiment, run_sweep

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_hash",
    "load_config",
    "RECIPES",
    "RunResult",
    "run_experiment",
    "run_sweep",
]
