"""Configuration, experiment orchestration, verification and CLI."""
from .config import ExperimentConfig, parse_config, parse_config_text, serialize_config
from .experiment import TrialError, TrialResult, mean_curves, run_experiment, run_trial, sweep
from .plots import emit_plots
from .verify import CheckResult, verify_suite

__all__ = [
    "ExperimentConfig", "parse_config", "parse_config_text", "serialize_config",
    "TrialError", "TrialResult", "mean_curves", "run_experiment", "run_trial", "sweep",
    "emit_plots", "CheckResult", "verify_suite",
]
