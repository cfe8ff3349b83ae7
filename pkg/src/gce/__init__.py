"""Consistent sparse translation explanations for groups of points in a
learned low-dimensional representation."""

from .data import (
    Dataset,
    Edit,
    PerturbationSpec,
    Standardization,
    compare_explanations,
    generate_synthetic,
    load_csv,
    modify_dataset,
    standardize,
    translation_to_raw,
    translation_to_standardized,
)
from .errors import ConfigError, DataError, GceError, NumericError
from .explain import (
    ExplanationSet,
    OptimizerConfig,
    TradeoffCurve,
    TradeoffPoint,
    apply_update,
    construct,
    dbm,
    default_lambda_grid,
    soft_threshold,
    sparsity_sweep,
    tgt_optimize,
    threshold_k,
    tune_lambda,
)
from .groups import (
    GroupStats,
    Grouping,
    assign_groups,
    calibrate_epsilon,
    default_epsilon_grid,
    group_stats,
    load_labels,
    self_similarities,
)
from .metrics import MetricsReport, correctness, coverage, pairwise_report, similarity
from .models import (
    BlackBoxModel,
    FeedForwardModel,
    Layer,
    LinearModel,
    forward,
    forward_batch,
    load_model,
    loss_and_gradient,
    make_command_evaluator,
    save_model,
)
from .training import TrainConfig, train_autoencoder, train_autoencoder_with_decoder

__version__ = "0.1.0"

__all__ = [
    "BlackBoxModel",
    "ConfigError",
    "DataError",
    "Dataset",
    "Edit",
    "ExplanationSet",
    "FeedForwardModel",
    "GceError",
    "GroupStats",
    "Grouping",
    "Layer",
    "LinearModel",
    "MetricsReport",
    "NumericError",
    "OptimizerConfig",
    "PerturbationSpec",
    "Standardization",
    "TradeoffCurve",
    "TradeoffPoint",
    "TrainConfig",
    "apply_update",
    "assign_groups",
    "calibrate_epsilon",
    "compare_explanations",
    "construct",
    "correctness",
    "coverage",
    "dbm",
    "default_epsilon_grid",
    "default_lambda_grid",
    "forward",
    "forward_batch",
    "generate_synthetic",
    "group_stats",
    "load_csv",
    "load_labels",
    "load_model",
    "loss_and_gradient",
    "make_command_evaluator",
    "modify_dataset",
    "pairwise_report",
    "save_model",
    "self_similarities",
    "similarity",
    "soft_threshold",
    "sparsity_sweep",
    "standardize",
    "tgt_optimize",
    "threshold_k",
    "train_autoencoder",
    "train_autoencoder_with_decoder",
    "translation_to_raw",
    "translation_to_standardized",
    "tune_lambda",
]
