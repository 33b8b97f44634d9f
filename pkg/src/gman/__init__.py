"""Multi-discriminator GAN training on a small reverse-mode autodiff engine."""

__version__ = "0.1.0"

from .aggregation import AggregationConfig, aggregate, gman_star_objective, softmax_weights
from .autodiff import Graph, ShapeError, Tensor
from .config import ConfigError, TrainConfig
from .ensemble import EnsembleConfig, build_ensemble, split_minibatch
from .evaluation import (ConvergenceReport, GmamResult, ModeCoverage, gmam, load_run,
                         mode_coverage, run_variance, sliding_stdev, steady_state_index)
from .nn import MLP, NetworkSpec
from .objectives import jsd, optimal_discriminator_value, squashed_sigmoid, value_estimate
from .optim import AdamState, adam_step
from .training import RunLog, Trainer, TrainingAborted, train

__all__ = [
    "AdamState", "AggregationConfig", "ConfigError", "ConvergenceReport", "EnsembleConfig",
    "GmamResult", "Graph", "MLP", "ModeCoverage", "NetworkSpec", "RunLog", "ShapeError",
    "Tensor", "TrainConfig", "Trainer", "TrainingAborted", "adam_step", "aggregate",
    "build_ensemble", "gmam", "gman_star_objective", "jsd", "load_run", "mode_coverage",
    "optimal_discriminator_value", "run_variance", "sliding_stdev", "softmax_weights",
    "split_minibatch", "squashed_sigmoid", "steady_state_index", "train", "value_estimate",
]
