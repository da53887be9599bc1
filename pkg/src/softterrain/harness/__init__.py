"""Configuration, metrics, plots and the command line."""
from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from .metrics import GaitStats, compute_gait_stats, phase_binned_base_height, streaming_gait_stats, walk_success_rate
