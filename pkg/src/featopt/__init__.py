"""Iterative feature-space refinement with an incrementally updated
attention evaluator.

The package pairs a recursive feature-elimination loop with an evaluator
that scores candidate feature sets: either a weight-shared multi-head
attention model updated incrementally across iterations via a Fisher-
weighted drift penalty, or one of the classic baselines (linear model,
CART tree, random forest).
"""

__version__ = "0.1.0"

from .attention import (
    CLASSIFICATION,
    REGRESSION,
    EvaluatorConfig,
    EvaluatorParams,
    SubspaceBatch,
    evaluate_metric,
    forward,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
)
from .dataio import Dataset, SplitSpec, load_csv, standardize_split
from .mathcore import AdamState, RandomSource, adam_step, row_softmax
from .metrics import classification_metrics, regression_metrics
from .pipeline import PipelineConfig, RfeDriver, downstream_test, rfe_step, run_pipeline
from .training import TrainConfig, TrainRecord, early_stop, fisher, incremental_fit
from .training import ewc_penalty, lr_at, pretrain

__all__ = [
    "AdamState",
    "CLASSIFICATION",
    "Dataset",
    "EvaluatorConfig",
    "EvaluatorParams",
    "PipelineConfig",
    "REGRESSION",
    "RandomSource",
    "RfeDriver",
    "SplitSpec",
    "SubspaceBatch",
    "TrainConfig",
    "TrainRecord",
    "adam_step",
    "classification_metrics",
    "downstream_test",
    "early_stop",
    "evaluate_metric",
    "ewc_penalty",
    "fisher",
    "forward",
    "incremental_fit",
    "init_params",
    "load_checkpoint",
    "load_csv",
    "loss",
    "lr_at",
    "pretrain",
    "regression_metrics",
    "rfe_step",
    "row_softmax",
    "run_pipeline",
    "save_checkpoint",
    "standardize_split",
    "__version__",
]
