"""Experiment harness: config parsing, orchestration, metrics and CLI."""

from .config import RunConfig, parse_config, serialize_config  # noqa: F401
from .experiment import collect_metrics, run_experiment, run_single_seed  # noqa: F401
from .metrics import MetricsFile, MetricsRow, read_metrics, summarize, write_metrics  # noqa: F401
from .presets import cartpole_config, figure_grid  # noqa: F401
