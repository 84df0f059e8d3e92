"""Experiment orchestration: configs, runners, records, plots, CLI."""

from .config import ConfigError, ExperimentConfig, parse_config, resolve_config
from .experiments import run_experiment
from .plots import emit_plot_data
from .records import ResultRecord, load_record, write_record

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRecord",
    "emit_plot_data",
    "load_record",
    "parse_config",
    "resolve_config",
    "run_experiment",
    "write_record",
]
