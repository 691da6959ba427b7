from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .report import fit_power_law, report
from .runner import RunManifest, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "RunManifest", "fit_power_law", "load_config",
           "parse_config", "report", "run_experiment"]
