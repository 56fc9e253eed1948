"""Evaluator plug-ins for the iterative refinement loop.

The loop needs four things from an evaluator: an initial fit, a
per-iteration update after the feature set shrinks, per-feature importance
scores, and a higher-is-better validation metric. The attention evaluator
carries state across iterations (previous batches, per-sample losses, a
drift penalty); the classic baselines simply refit from scratch each time.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import baselines
from .attention import CLASSIFICATION, EvaluatorConfig, evaluate_metric, init_params
from .dataio import Dataset, SplitSpec
from .errors import InvalidArgumentError
from .mathcore import RandomSource
from .metrics import classification_metrics
from .subspaces import (
    FeatureScore,
    build_subspaces,
    error_distribution,
    feature_scores,
    random_subspaces,
    weighted_sample,
)
from .training import TrainConfig, TrainRecord, fisher, fit_batches


class EaseArm:
    """The incrementally updated attention evaluator.

    Ablation switches:
      * ``skip_pretrain``     -- keep the random init (no initial training).
      * ``from_scratch``      -- reinitialize and retrain fully every
                                 iteration; the drift penalty is ignored.
      * ``uniform_subspaces`` -- drop the guided construction entirely:
                                 every iteration trains on uniformly drawn
                                 samples over the full original feature
                                 set, exactly like pre-training batches.
    """

    name = "ease"

    def __init__(
        self,
        dataset: Dataset,
        split: SplitSpec,
        rng: RandomSource,
        dim: int = 32,
        heads: int = 16,
        subspace_count: int | None = None,
        train_config: TrainConfig | None = None,
        skip_pretrain: bool = False,
        from_scratch: bool = False,
        uniform_subspaces: bool = False,
    ):
        self.dataset = dataset
        self.split = split
        self.rng = rng
        self.train_config = train_config or TrainConfig()
        self.skip_pretrain = skip_pretrain
        self.from_scratch = from_scratch
        self.uniform_subspaces = uniform_subspaces
        self.config = EvaluatorConfig(
            dim=dim,
            heads=heads,
            k_orig=dataset.n_features,
            task=dataset.task,
            n_classes=dataset.n_classes,
        )
        n_train = len(split.train)
        # Default q covers roughly one epoch-equivalent of the train split.
        self.subspace_count = subspace_count or max(8, math.ceil(n_train / dim))
        self.params = init_params(self.config, rng)
        self.prev_batches: list = []
        self.sample_losses: dict[int, float] = {}

    def _val_data(self):
        rows = self.split.validation
        return self.dataset.features[rows], self.dataset.targets[rows]

    def initial_fit(self) -> TrainRecord:
        values, targets = self.dataset.features, self.dataset.targets
        batches = random_subspaces(
            values,
            targets,
            self.split.train,
            self.config.dim,
            self.subspace_count,
            self.rng,
        )
        if self.skip_pretrain:
            record = TrainRecord(epochs=0, losses=[], duration_ms=0.0, stop_reason="skipped")
        else:
            record, self.sample_losses = fit_batches(
                self.params,
                batches,
                self.config,
                self.train_config,
                self.rng,
                self.train_config.pretrain_epoch_cap,
            )
        self.prev_batches = batches
        return record

    def _select_sample_ids(self) -> np.ndarray:
        """Error-weighted sample multiset: hard examples drawn more often.

        Samples never drawn before fall back to the mean known loss, and
        losses carry forward for samples skipped in the last round.
        """
        train_ids = self.split.train
        known = [v for v in self.sample_losses.values()]
        fallback = sum(known) / len(known) if known else 1.0
        losses = np.asarray(
            [self.sample_losses.get(int(sid), fallback) for sid in train_ids]
        )
        dist = error_distribution(losses)
        picks = weighted_sample(dist, self.rng, len(train_ids))
        return train_ids[picks]

    def refresh(self, active_ids) -> TrainRecord:
        if self.uniform_subspaces:
            batches = random_subspaces(
                self.dataset.features,
                self.dataset.targets,
                self.split.train,
                self.config.dim,
                self.subspace_count,
                self.rng,
            )
        else:
            batches = build_subspaces(
                self.dataset.features,
                self.dataset.targets,
                active_ids,
                self._select_sample_ids(),
                self.config.dim,
                self.subspace_count,
                self.rng,
            )
        if self.from_scratch:
            self.params = init_params(self.config, self.rng)
            record, new_losses = fit_batches(
                self.params,
                batches,
                self.config,
                self.train_config,
                self.rng,
                self.train_config.incremental_epoch_cap,
            )
        else:
            fisher_diag = fisher(self.params, self.prev_batches, self.config)
            theta_prev = self.params.to_flat().copy()
            record, new_losses = fit_batches(
                self.params,
                batches,
                self.config,
                self.train_config,
                self.rng,
                self.train_config.incremental_epoch_cap,
                penalty=(theta_prev, fisher_diag, self.train_config.ewc_lambda),
            )
        # Carry old losses forward for samples not drawn this round.
        self.sample_losses.update(new_losses)
        self.prev_batches = batches
        return record

    def score_features(self, active_ids):
        rows, targets = self._val_data()
        return feature_scores(self.params, self.config, active_ids, rows, targets)

    def validation_metric(self, active_ids) -> float:
        rows, targets = self._val_data()
        return evaluate_metric(self.params, self.config, active_ids, rows, targets)


class _BaselineArm:
    """Shared machinery for refit-from-scratch evaluators."""

    name = "baseline"

    def __init__(self, dataset: Dataset, split: SplitSpec, rng: RandomSource):
        self.dataset = dataset
        self.split = split
        self.rng = rng
        self.active = np.arange(dataset.n_features)
        self.model = None

    def _train_data(self):
        rows = self.split.train
        return (
            self.dataset.features[np.ix_(rows, self.active)],
            self.dataset.targets[rows],
        )

    def _val_data(self):
        rows = self.split.validation
        return (
            self.dataset.features[np.ix_(rows, self.active)],
            self.dataset.targets[rows],
        )

    def _metric(self, y_true, y_pred) -> float:
        # Higher is better: accuracy for classification, negative MSE for
        # regression (mirrors the attention arm's negative-loss convention).
        if self.dataset.task == CLASSIFICATION:
            return classification_metrics(y_true, y_pred, self.dataset.n_classes)[
                "accuracy"
            ]
        diff = np.asarray(y_true, dtype=np.float64) - np.asarray(y_pred, dtype=np.float64)
        return -float(np.mean(diff * diff))

    def _fit(self, X, y):
        raise NotImplementedError

    def _predict(self, X):
        raise NotImplementedError

    def initial_fit(self) -> TrainRecord:
        return self.refresh(self.active)

    def refresh(self, active_ids) -> TrainRecord:
        self.active = np.sort(np.asarray(active_ids, dtype=np.int64))
        start = time.perf_counter()
        X, y = self._train_data()
        self.model = self._fit(X, y)
        train_metric = self._metric(y, self._predict(X))
        return TrainRecord(
            epochs=1,
            losses=[-train_metric],
            duration_ms=(time.perf_counter() - start) * 1000.0,
            stop_reason="cap",
        )

    def validation_metric(self, active_ids) -> float:
        if not np.array_equal(
            np.sort(np.asarray(active_ids, dtype=np.int64)), self.active
        ):
            raise InvalidArgumentError("baseline evaluators score the fitted feature set")
        X, y = self._val_data()
        return self._metric(y, self._predict(X))

    def _column_scores(self) -> np.ndarray:
        raise NotImplementedError

    def score_features(self, active_ids):
        scores = self._column_scores()
        return [
            FeatureScore(int(fid), float(s)) for fid, s in zip(self.active, scores)
        ]


class LinearArm(_BaselineArm):
    name = "linear"

    def _fit(self, X, y):
        return baselines.fit_linear(X, y, self.dataset.task)

    def _predict(self, X):
        return baselines.predict_linear(self.model, X)

    def _column_scores(self) -> np.ndarray:
        # Coefficient magnitude on standardized features; L2 across class
        # outputs for classification.
        w = self.model.weights
        if w.ndim == 1:
            return np.abs(w)
        return np.sqrt((w**2).sum(axis=1))


class _PermutationArm(_BaselineArm):
    def _column_scores(self) -> np.ndarray:
        X, y = self._val_data()
        return baselines.permutation_importance(
            self._predict, X, y, self._metric, self.rng
        )


class TreeArm(_PermutationArm):
    name = "tree"

    def __init__(self, dataset, split, rng, max_depth: int = 12, min_leaf: int = 2):
        super().__init__(dataset, split, rng)
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _fit(self, X, y):
        return baselines.fit_tree(
            X,
            y,
            self.dataset.task,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
            n_classes=self.dataset.n_classes or None,
        )

    def _predict(self, X):
        return baselines.predict_tree(self.model, X, self.dataset.task)


class ForestArm(_PermutationArm):
    name = "forest"

    def __init__(
        self,
        dataset,
        split,
        rng,
        n_trees: int = 100,
        max_depth: int = 12,
        min_leaf: int = 2,
    ):
        super().__init__(dataset, split, rng)
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def _fit(self, X, y):
        return baselines.fit_forest(
            X,
            y,
            self.dataset.task,
            self.n_trees,
            self.rng,
            max_depth=self.max_depth,
            min_leaf=self.min_leaf,
        )

    def _predict(self, X):
        return baselines.predict_forest(self.model, X)
