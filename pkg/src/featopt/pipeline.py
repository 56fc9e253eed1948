"""The iterative refinement loop and its recursive-elimination driver.

Each iteration scores the active features with the current evaluator,
drops the weakest slice, updates the evaluator on the surviving set, and
records the validation metric. The loop stops at the target feature count
or the iteration cap; the feature set with the best validation metric over
the whole history is then scored once by a freshly fitted random forest on
the held-out test split.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .baselines import fit_forest, predict_forest
from .dataio import CLASSIFICATION, Dataset, SplitSpec, standardize_split
from .errors import ContractError, InvalidArgumentError
from .mathcore import RandomSource
from .metrics import classification_metrics, regression_metrics
from .plugins import EaseArm, ForestArm, LinearArm, TreeArm
from .subspaces import FeatureScore, top_k_features
from .training import TrainConfig

EVALUATOR_CHOICES = ("ease", "linear", "tree", "forest")


@dataclass
class PipelineConfig:
    """Everything a single refinement run needs besides the dataset."""

    target_k: int
    max_iters: int = 100
    rfe_drop_fraction: float = 0.1
    evaluator: str = "ease"
    seed: int = 0
    dim: int = 32
    heads: int = 16
    subspace_count: int | None = None
    split_ratios: tuple = (0.6, 0.2, 0.2)
    train: TrainConfig = field(default_factory=TrainConfig)
    forest_trees: int = 100
    forest_depth: int = 12
    forest_min_leaf: int = 2
    # EASE ablation switches; meaningful only when evaluator == "ease".
    skip_pretrain: bool = False
    from_scratch: bool = False
    uniform_subspaces: bool = False

    def __post_init__(self):
        if self.evaluator not in EVALUATOR_CHOICES:
            raise InvalidArgumentError(
                f"evaluator must be one of {EVALUATOR_CHOICES}, got {self.evaluator!r}"
            )
        if self.target_k < 1:
            raise InvalidArgumentError("target_k must be >= 1")
        if not 0.0 < self.rfe_drop_fraction < 1.0:
            raise InvalidArgumentError("rfe_drop_fraction must be in (0, 1)")
        if self.max_iters < 0:
            raise InvalidArgumentError("max_iters must be >= 0")

    def to_dict(self) -> dict:
        return {
            "target_k": self.target_k,
            "max_iters": self.max_iters,
            "rfe_drop_fraction": self.rfe_drop_fraction,
            "evaluator": self.evaluator,
            "seed": self.seed,
            "dim": self.dim,
            "heads": self.heads,
            "subspace_count": self.subspace_count,
            "split_ratios": list(self.split_ratios),
            "train": {
                "pretrain_epoch_cap": self.train.pretrain_epoch_cap,
                "incremental_epoch_cap": self.train.incremental_epoch_cap,
                "patience": self.train.patience,
                "initial_lr": self.train.initial_lr,
                "decay_factor": self.train.decay_factor,
                "decay_interval": self.train.decay_interval,
                "ewc_lambda": self.train.ewc_lambda,
            },
            "forest_trees": self.forest_trees,
            "forest_depth": self.forest_depth,
            "forest_min_leaf": self.forest_min_leaf,
            "skip_pretrain": self.skip_pretrain,
            "from_scratch": self.from_scratch,
            "uniform_subspaces": self.uniform_subspaces,
        }


class RfeDriver:
    """Recursive elimination: shave the weakest slice until the target size.

    Any object with the same two methods can drive the loop instead; the
    evaluator supplies scores, the driver decides what survives.
    """

    def __init__(self, target_k: int, drop_fraction: float):
        self.target_k = target_k
        self.drop_fraction = drop_fraction

    def done(self, active_ids) -> bool:
        return len(active_ids) <= self.target_k

    def propose(self, active_ids, scores) -> list[int]:
        return rfe_step(active_ids, scores, self.target_k, self.drop_fraction)


def rfe_step(active_ids, scores, target_k: int, drop_fraction: float) -> list[int]:
    """Drop the lowest-scoring slice of the active set.

    Removes max(1, floor(drop_fraction * |active|)) features but never goes
    below ``target_k``: the surviving count feeds :func:`top_k_features`,
    whose lower-id tie preference means score ties remove the higher global
    id first.
    """
    active = sorted(int(f) for f in active_ids)
    if len(active) <= target_k:
        raise InvalidArgumentError("active set is already at or below target_k")
    score_map = {int(fs.feature_id): float(fs.score) for fs in scores}
    missing = [f for f in active if f not in score_map]
    if missing:
        raise ContractError(f"missing scores for active features {missing}")
    n_remove = max(1, int(drop_fraction * len(active)))
    n_remove = min(n_remove, len(active) - target_k)
    active_scores = [FeatureScore(f, score_map[f]) for f in active]
    return top_k_features(active_scores, len(active) - n_remove)


def _make_plugin(dataset: Dataset, split: SplitSpec, cfg: PipelineConfig, rng):
    if cfg.evaluator == "ease":
        return EaseArm(
            dataset,
            split,
            rng,
            dim=cfg.dim,
            heads=cfg.heads,
            subspace_count=cfg.subspace_count,
            train_config=cfg.train,
            skip_pretrain=cfg.skip_pretrain,
            from_scratch=cfg.from_scratch,
            uniform_subspaces=cfg.uniform_subspaces,
        )
    if cfg.evaluator == "linear":
        return LinearArm(dataset, split, rng)
    if cfg.evaluator == "tree":
        return TreeArm(dataset, split, rng, cfg.forest_depth, cfg.forest_min_leaf)
    return ForestArm(
        dataset, split, rng, cfg.forest_trees, cfg.forest_depth, cfg.forest_min_leaf
    )


def downstream_test(
    dataset: Dataset,
    split: SplitSpec,
    feature_ids,
    seed: int,
    n_trees: int = 100,
    max_depth: int = 12,
    min_leaf: int = 2,
) -> dict:
    """Score a feature subset with a freshly fitted random forest.

    The forest is trained on the training split restricted to the subset
    and evaluated on the test split; nothing from the refinement loop is
    reused, so the score is independent of the evaluator that chose it.
    """
    fids = np.sort(np.asarray(list(feature_ids), dtype=np.int64))
    if fids.size == 0:
        raise InvalidArgumentError("feature set must not be empty")
    rng = RandomSource(seed)
    X_train = dataset.features[np.ix_(split.train, fids)]
    y_train = dataset.targets[split.train]
    X_test = dataset.features[np.ix_(split.test, fids)]
    y_test = dataset.targets[split.test]
    forest = fit_forest(
        X_train,
        y_train,
        dataset.task,
        n_trees,
        rng,
        max_depth=max_depth,
        min_leaf=min_leaf,
    )
    predictions = predict_forest(forest, X_test)
    if dataset.task == CLASSIFICATION:
        metrics = classification_metrics(y_test, predictions, dataset.n_classes)
    else:
        metrics = regression_metrics(y_test, predictions)
    return {"feature_ids": fids.tolist(), "metrics": metrics}


def run_pipeline(dataset: Dataset, cfg: PipelineConfig, driver=None) -> dict:
    """Run the full refinement loop and return the report as a dict.

    ``driver`` defaults to recursive elimination; anything exposing
    ``done(active_ids)`` and ``propose(active_ids, scores)`` can be
    plugged in instead. The report is JSON-ready: manifest, dataset
    summary, one record per iteration (iteration 0 is the initial fit on
    the full feature set), the best-by-validation feature set, its
    downstream forest metrics, and the cumulative evaluator training time.
    """
    if dataset.n_features < 2:
        raise InvalidArgumentError("dataset needs at least two features")
    if cfg.target_k >= dataset.n_features:
        raise InvalidArgumentError(
            f"target_k={cfg.target_k} must be below the feature count "
            f"{dataset.n_features}"
        )
    wall_start = time.perf_counter()
    rng = RandomSource(cfg.seed)
    standardized, split = standardize_split(dataset, cfg.split_ratios, cfg.seed)
    plugin = _make_plugin(standardized, split, cfg, rng)
    if driver is None:
        driver = RfeDriver(cfg.target_k, cfg.rfe_drop_fraction)

    active = list(range(dataset.n_features))
    history = []

    step_start = time.perf_counter()
    record = plugin.initial_fit()
    metric = plugin.validation_metric(active)
    history.append(
        {
            "iteration": 0,
            "feature_ids": list(active),
            "train_record": record.to_dict(),
            "validation_metric": metric,
            "duration_ms": (time.perf_counter() - step_start) * 1000.0,
        }
    )

    iteration = 0
    while not driver.done(active) and iteration < cfg.max_iters:
        iteration += 1
        step_start = time.perf_counter()
        scores = plugin.score_features(active)
        active = driver.propose(active, scores)
        record = plugin.refresh(active)
        metric = plugin.validation_metric(active)
        history.append(
            {
                "iteration": iteration,
                "feature_ids": list(active),
                "train_record": record.to_dict(),
                "validation_metric": metric,
                "duration_ms": (time.perf_counter() - step_start) * 1000.0,
            }
        )

    best = max(history, key=lambda h: h["validation_metric"])
    downstream = downstream_test(
        standardized,
        split,
        best["feature_ids"],
        cfg.seed,
        n_trees=cfg.forest_trees,
        max_depth=cfg.forest_depth,
        min_leaf=cfg.forest_min_leaf,
    )
    cumulative_ms = sum(h["train_record"]["duration_ms"] for h in history)

    return {
        "schema_version": 1,
        "kind": "run",
        "manifest": {
            "tool_version": __version__,
            "seed": cfg.seed,
            "dataset_path": None,
            "dataset_sha256": None,
            "config": cfg.to_dict(),
        },
        "dataset": {
            "name": dataset.name,
            "rows": dataset.n_samples,
            "features": dataset.n_features,
            "task": dataset.task,
            "classes": dataset.n_classes,
        },
        "iterations": history,
        "best": {
            "iteration": best["iteration"],
            "feature_ids": best["feature_ids"],
            "validation_metric": best["validation_metric"],
        },
        "downstream": downstream,
        "cumulative_time_ms": cumulative_ms,
        "wall_time_ms": (time.perf_counter() - wall_start) * 1000.0,
    }
