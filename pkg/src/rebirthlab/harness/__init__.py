"""Config-driven verification campaigns and the command line."""
from .checks import CHECKS, DEFAULTS, RunContext, Verdict, check_ids, run_check
from .config import ExperimentConfig, load_config, parse_config
from .runner import RunManifest, run_experiment

__all__ = ["CHECKS", "DEFAULTS", "RunContext", "Verdict", "check_ids", "run_check",
           "ExperimentConfig", "load_config", "parse_config", "RunManifest", "run_experiment"]
