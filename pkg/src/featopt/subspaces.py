"""Feature scoring, error-weighted sample selection, subspace construction.

Feature importance is measured leave-one-out against a trained evaluator:
score = metric(active) - metric(active without the feature), with the same
parameters on both sides. Samples are drawn with replacement in proportion
to their last known loss via inverse-CDF sampling, so hard examples are
over-represented in the next round of training subspaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .attention import EvaluatorConfig, EvaluatorParams, SubspaceBatch, evaluate_metric
from .errors import CannotScoreError, InvalidArgumentError, InvalidInputError
from .mathcore import RandomSource


class FeatureScore(NamedTuple):
    feature_id: int
    score: float


@dataclass(frozen=True)
class SampleDistribution:
    """Selection probabilities plus their running sum (the CDF)."""

    probabilities: np.ndarray
    cumulative: np.ndarray


def error_distribution(per_sample_losses) -> SampleDistribution:
    """Losses -> selection probabilities p_i = L_i / sum(L).

    An all-zero loss vector (perfect fit) falls back to the uniform
    distribution rather than failing.
    """
    losses = np.asarray(per_sample_losses, dtype=np.float64)
    if losses.size == 0:
        raise InvalidInputError("need at least one per-sample loss")
    if not np.all(np.isfinite(losses)):
        raise InvalidInputError("per-sample losses must be finite")
    if np.any(losses < 0):
        raise InvalidInputError("per-sample losses must be nonnegative")
    total = losses.sum()
    if total == 0.0:
        probs = np.full(losses.size, 1.0 / losses.size)
    else:
        probs = losses / total
    return SampleDistribution(probabilities=probs, cumulative=np.cumsum(probs))


def weighted_sample(
    dist: SampleDistribution, rng: RandomSource, count: int
) -> np.ndarray:
    """Draw ``count`` indices with replacement by inverting the CDF.

    Each draw picks the smallest i with C_i >= r for r ~ U[0, 1).
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    cdf = dist.cumulative
    r = rng.uniforms(count)
    idx = np.searchsorted(cdf, r, side="left")
    idx = np.minimum(idx, len(cdf) - 1)
    # r == 0.0 can land on leading zero-probability entries; bump those to
    # the first sample with positive probability so p_i = 0 is never chosen.
    zero_hit = dist.probabilities[idx] == 0.0
    if np.any(zero_hit):
        idx[zero_hit] = int(np.argmax(dist.probabilities > 0.0))
    return idx.astype(np.int64)


def feature_scores(
    params: EvaluatorParams,
    cfg: EvaluatorConfig,
    active_features,
    eval_rows: np.ndarray,
    eval_targets: np.ndarray,
) -> list[FeatureScore]:
    """Leave-one-out importance of every active feature, no retraining."""
    active = sorted(int(f) for f in active_features)
    if len(active) < 2:
        raise CannotScoreError("need at least two active features to score")
    with_all = evaluate_metric(params, cfg, active, eval_rows, eval_targets)
    scores = []
    for fid in active:
        rest = [f for f in active if f != fid]
        without = evaluate_metric(params, cfg, rest, eval_rows, eval_targets)
        scores.append(FeatureScore(fid, with_all - without))
    return scores


def top_k_features(scores, k: int) -> list[int]:
    """The k best-scoring feature ids, ties to the lower id, sorted by id."""
    scores = list(scores)
    if not 1 <= k <= len(scores):
        raise InvalidArgumentError(f"k={k} out of range for {len(scores)} scores")
    ranked = sorted(scores, key=lambda fs: (-fs.score, fs.feature_id))
    return sorted(fs.feature_id for fs in ranked[:k])


def build_subspaces(
    values: np.ndarray,
    targets: np.ndarray,
    feature_ids,
    index_set: np.ndarray,
    s: int,
    q: int,
    rng: RandomSource,
) -> list[SubspaceBatch]:
    """Construct q batches of s rows each from the selected sample multiset,
    restricted to the selected features."""
    fids = np.sort(np.asarray(feature_ids, dtype=np.int64))
    index_set = np.asarray(index_set, dtype=np.int64)
    if fids.size == 0:
        raise InvalidArgumentError("feature set must not be empty")
    if index_set.size == 0:
        raise InvalidArgumentError("sample index set must not be empty")
    if s < 1 or q < 1:
        raise InvalidArgumentError("s and q must be >= 1")
    values = np.asarray(values, dtype=np.float64)
    targets = np.asarray(targets)
    batches = []
    for _ in range(q):
        rows = index_set[rng.integers(0, index_set.size, size=s)]
        batches.append(
            SubspaceBatch(
                values=values[np.ix_(rows, fids)],
                feature_ids=fids.copy(),
                sample_ids=rows,
                targets=targets[rows],
            )
        )
    return batches


def random_subspaces(
    values: np.ndarray,
    targets: np.ndarray,
    train_ids: np.ndarray,
    s: int,
    q: int,
    rng: RandomSource,
) -> list[SubspaceBatch]:
    """Pre-training batches: uniform sample draws over the training split,
    every original feature present in every batch."""
    values = np.asarray(values, dtype=np.float64)
    all_features = np.arange(values.shape[1], dtype=np.int64)
    return build_subspaces(values, targets, all_features, train_ids, s, q, rng)
