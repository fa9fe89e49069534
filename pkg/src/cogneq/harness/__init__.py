from .config import ExperimentConfig, ConfigError, load_config, loads_config, save_config
from .experiment import run_experiment, emit_trace, sensing_sweep, convergence_compare, global_constraint_run

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "loads_config",
           "save_config", "run_experiment", "emit_trace", "sensing_sweep",
           "convergence_compare", "global_constraint_run"]
