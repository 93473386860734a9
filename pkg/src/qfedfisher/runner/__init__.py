"""Experiment configuration, execution and the command-line interface."""
from ..seeds import derive_seed
from .config import PRESETS, ConfigError, ExperimentConfig, parse_config, validate
from .experiment import load_data, make_partitions, run_experiment, run_strategy
