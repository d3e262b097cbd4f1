"""Experiment orchestration: configs, runs, metrics, plot tables and self-checks."""

from .config import ExperimentConfig, dump_config, load_config
from .metrics import metric_kl_to_true, metric_neg_logprob_true, metric_tv_on_grid
from .plots import emit_plot_data
from .runner import RunResult, load_result, run_experiment

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "dump_config",
    "emit_plot_data",
    "load_config",
    "load_result",
    "metric_kl_to_true",
    "metric_neg_logprob_true",
    "metric_tv_on_grid",
    "run_experiment",
]
