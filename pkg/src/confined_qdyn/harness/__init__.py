"""Configuration, lambda sweeps, persistence, plots and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import fit_directory, run_e1, run_e2, run_experiment, run_validate
from .io import RunManifest, read_record, write_record
from .plotting import emit_plots

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_e1",
    "run_e2",
    "run_validate",
    "run_experiment",
    "fit_directory",
    "RunManifest",
    "read_record",
    "write_record",
    "emit_plots",
]
