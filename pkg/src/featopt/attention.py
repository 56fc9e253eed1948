"""Contextual attention evaluator over fixed-size feature subspaces.

A subspace of ``s`` samples by ``k`` features is scored by transposing it so
the ``k`` features become attention tokens embedded in R^s, running one
multi-head attention block over the tokens, then concatenating the attended
and raw feature panels into a fixed-width input for a linear head indexed by
global feature id. Weight shapes depend only on the embedding dimension and
the original feature count, never on ``k``, so a single parameter vector is
shared by every subspace and survives every optimization iteration — which
is what makes drift penalties between iterations well-defined.

The backward pass is derived by hand; there is no autodiff anywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    InvalidBatchError,
    InvalidInputError,
    LabelError,
    ShapeError,
)
from .mathcore import RandomSource, row_softmax

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class EvaluatorConfig:
    """Static shape information for the evaluator.

    ``dim`` is both the embedding width and the number of samples per
    subspace; ``heads`` must divide it. ``k_orig`` is the original feature
    count, which fixes the width of the output head.
    """

    dim: int
    heads: int
    k_orig: int
    task: str
    n_classes: int = 0

    def __post_init__(self):
        if self.task not in (CLASSIFICATION, REGRESSION):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.dim < 1 or self.heads < 1 or self.k_orig < 1:
            raise ConfigError("dim, heads and k_orig must all be >= 1")
        if self.dim % self.heads != 0:
            raise ConfigError(
                f"head count {self.heads} does not divide embedding dim {self.dim}"
            )
        if self.task == CLASSIFICATION and self.n_classes < 2:
            raise ConfigError("classification needs at least 2 classes")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def out_dim(self) -> int:
        return self.n_classes if self.task == CLASSIFICATION else 1


@dataclass
class SubspaceBatch:
    """An s-by-k slice of the feature space with its global index maps."""

    values: np.ndarray  # s x k, rows are samples
    feature_ids: np.ndarray  # k global feature indices, distinct
    sample_ids: np.ndarray  # s global sample indices
    targets: np.ndarray  # s labels (class index) or reals

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.feature_ids = np.asarray(self.feature_ids, dtype=np.int64)
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        self.targets = np.asarray(self.targets)
        s, k = self.values.shape
        if self.feature_ids.shape != (k,):
            raise ShapeError("feature_ids length must equal the column count")
        if self.sample_ids.shape != (s,) or self.targets.shape != (s,):
            raise ShapeError("sample_ids and targets must have one entry per row")
        if k < 1:
            raise InvalidBatchError("a subspace needs at least one feature")


_TENSOR_FIELDS = (
    "w_q",
    "w_k",
    "w_v",
    "w_q_heads",
    "w_k_heads",
    "w_v_heads",
    "w_out",
    "w_fc",
    "b_fc",
)


@dataclass
class EvaluatorParams:
    """All learnable weights, with a lossless flat-vector view.

    The flat layout is fixed by ``_TENSOR_FIELDS`` order; its length never
    changes across iterations regardless of the current subspace width.
    """

    w_q: np.ndarray  # dim x dim
    w_k: np.ndarray  # dim x dim
    w_v: np.ndarray  # dim x dim
    w_q_heads: np.ndarray  # heads x dim x head_dim
    w_k_heads: np.ndarray  # heads x dim x head_dim
    w_v_heads: np.ndarray  # heads x dim x head_dim
    w_out: np.ndarray  # dim x dim
    w_fc: np.ndarray  # (2 * k_orig) x out_dim
    b_fc: np.ndarray  # out_dim

    def tensors(self):
        for name in _TENSOR_FIELDS:
            yield name, getattr(self, name)

    @property
    def size(self) -> int:
        return sum(t.size for _, t in self.tensors())

    def to_flat(self) -> np.ndarray:
        return np.concatenate([t.ravel() for _, t in self.tensors()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ShapeError(
                f"flat vector has length {flat.shape}, expected ({self.size},)"
            )
        offset = 0
        for name, tensor in self.tensors():
            chunk = flat[offset : offset + tensor.size]
            setattr(self, name, chunk.reshape(tensor.shape).copy())
            offset += tensor.size

    def copy(self) -> "EvaluatorParams":
        return EvaluatorParams(**{name: t.copy() for name, t in self.tensors()})


def init_params(cfg: EvaluatorConfig, rng: RandomSource) -> EvaluatorParams:
    """Seeded uniform init: attention weights ~ U(+-sqrt(1/dim)), output head
    ~ U(+-sqrt(1/(2*k_orig))), zero bias."""
    d, h, m = cfg.dim, cfg.heads, cfg.head_dim
    bound = math.sqrt(1.0 / d)
    fc_bound = math.sqrt(1.0 / (2 * cfg.k_orig))
    return EvaluatorParams(
        w_q=rng.uniform(-bound, bound, (d, d)),
        w_k=rng.uniform(-bound, bound, (d, d)),
        w_v=rng.uniform(-bound, bound, (d, d)),
        w_q_heads=rng.uniform(-bound, bound, (h, d, m)),
        w_k_heads=rng.uniform(-bound, bound, (h, d, m)),
        w_v_heads=rng.uniform(-bound, bound, (h, d, m)),
        w_out=rng.uniform(-bound, bound, (d, d)),
        w_fc=rng.uniform(-fc_bound, fc_bound, (2 * cfg.k_orig, cfg.out_dim)),
        b_fc=np.zeros(cfg.out_dim),
    )


@dataclass
class ForwardCache:
    """Intermediate activations retained for the backward pass."""

    x: np.ndarray  # k x dim (tokens = features)
    q: np.ndarray  # k x dim
    k: np.ndarray  # k x dim
    v: np.ndarray  # k x dim
    q_heads: np.ndarray  # heads x k x head_dim
    k_heads: np.ndarray  # heads x k x head_dim
    v_heads: np.ndarray  # heads x k x head_dim
    attn: np.ndarray  # heads x k x k, rows sum to 1
    concat: np.ndarray  # k x dim, heads stitched back together
    z: np.ndarray  # s x (2 * k_orig), globally indexed head input
    logits: np.ndarray  # s x out_dim
    feature_ids: np.ndarray
    n_samples: int


def forward(
    batch: SubspaceBatch, params: EvaluatorParams, cfg: EvaluatorConfig
) -> tuple[np.ndarray, ForwardCache]:
    """Run the evaluator on one subspace; returns raw predictions plus cache.

    Classification outputs are logits; the softmax lives in the loss and in
    prediction, not here.
    """
    fids = batch.feature_ids
    if len(np.unique(fids)) != len(fids):
        raise InvalidBatchError("duplicate feature ids in batch")
    if fids.min() < 0 or fids.max() >= cfg.k_orig:
        raise InvalidBatchError("feature id outside the original feature space")
    s, k = batch.values.shape
    if s != cfg.dim:
        raise InvalidBatchError(
            f"subspace has {s} samples but the embedding dim is {cfg.dim}"
        )

    x = batch.values.T  # k tokens embedded in R^dim
    q = x @ params.w_q
    kk = x @ params.w_k
    v = x @ params.w_v
    q_heads = np.einsum("kd,hdm->hkm", q, params.w_q_heads)
    k_heads = np.einsum("kd,hdm->hkm", kk, params.w_k_heads)
    v_heads = np.einsum("kd,hdm->hkm", v, params.w_v_heads)
    scores = q_heads @ k_heads.transpose(0, 2, 1) / math.sqrt(cfg.head_dim)
    attn = row_softmax(scores)
    heads_out = attn @ v_heads  # heads x k x head_dim
    concat = heads_out.transpose(1, 0, 2).reshape(k, cfg.dim)
    context = concat @ params.w_out  # k x dim, context-enhanced tokens

    # Attended and raw panels, scattered by global feature id so the head
    # width stays fixed; absent features contribute exact zeros.
    z = np.zeros((s, 2 * cfg.k_orig))
    z[:, fids] = context.T
    z[:, cfg.k_orig + fids] = batch.values
    logits = z @ params.w_fc + params.b_fc

    cache = ForwardCache(
        x=x,
        q=q,
        k=kk,
        v=v,
        q_heads=q_heads,
        k_heads=k_heads,
        v_heads=v_heads,
        attn=attn,
        concat=concat,
        z=z,
        logits=logits,
        feature_ids=fids,
        n_samples=s,
    )
    return logits, cache


def loss(
    predictions: np.ndarray, targets: np.ndarray, task: str
) -> tuple[float, np.ndarray]:
    """Mean loss plus the per-sample loss vector.

    Classification: softmax cross-entropy over logits. Regression: squared
    error. The per-sample vector feeds the error-weighted sample selection.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets)
    if predictions.ndim != 2 or predictions.shape[0] != targets.shape[0]:
        raise ShapeError(
            f"predictions {predictions.shape} do not match targets {targets.shape}"
        )
    if task == CLASSIFICATION:
        labels = targets.astype(np.int64)
        n_classes = predictions.shape[1]
        if labels.min() < 0 or labels.max() >= n_classes:
            raise LabelError(
                f"label outside [0, {n_classes}): {int(labels.max())}"
            )
        zmax = predictions.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(predictions - zmax).sum(axis=1))
        per_sample = lse - predictions[np.arange(len(labels)), labels]
    elif task == REGRESSION:
        per_sample = (predictions[:, 0] - targets.astype(np.float64)) ** 2
    else:
        raise InvalidInputError(f"unknown task {task!r}")
    return float(per_sample.mean()), per_sample


def _loss_grad_logits(logits, targets, task) -> np.ndarray:
    """d(mean loss)/d(logits)."""
    s = logits.shape[0]
    if task == CLASSIFICATION:
        probs = row_softmax(logits)
        probs[np.arange(s), targets.astype(np.int64)] -= 1.0
        return probs / s
    residual = logits[:, 0] - targets.astype(np.float64)
    return (2.0 * residual / s).reshape(s, 1)


def _log_likelihood_grad_logits(logits, targets, task) -> np.ndarray:
    """d(sum of log-likelihoods)/d(logits); unit-variance Gaussian for
    regression, categorical for classification."""
    s = logits.shape[0]
    if task == CLASSIFICATION:
        grad = -row_softmax(logits)
        grad[np.arange(s), targets.astype(np.int64)] += 1.0
        return grad
    residual = targets.astype(np.float64) - logits[:, 0]
    return residual.reshape(s, 1)


def _backprop(
    cache: ForwardCache,
    d_logits: np.ndarray,
    params: EvaluatorParams,
    cfg: EvaluatorConfig,
) -> np.ndarray:
    """Push a gradient at the logits back to every parameter (flat order)."""
    fids = cache.feature_ids
    scale = math.sqrt(cfg.head_dim)
    k = cache.x.shape[0]

    d_w_fc = cache.z.T @ d_logits
    d_b_fc = d_logits.sum(axis=0)
    d_z = d_logits @ params.w_fc.T

    # Only the attended panel carries parameters upstream; the raw panel is
    # a direct copy of the input.
    d_context = d_z[:, fids].T  # k x dim
    d_w_out = cache.concat.T @ d_context
    d_concat = d_context @ params.w_out.T
    d_heads_out = d_concat.reshape(k, cfg.heads, cfg.head_dim).transpose(1, 0, 2)

    d_attn = d_heads_out @ cache.v_heads.transpose(0, 2, 1)
    d_v_heads = cache.attn.transpose(0, 2, 1) @ d_heads_out
    inner = (cache.attn * d_attn).sum(axis=-1, keepdims=True)
    d_scores = cache.attn * (d_attn - inner)
    d_q_heads = d_scores @ cache.k_heads / scale
    d_k_heads = d_scores.transpose(0, 2, 1) @ cache.q_heads / scale

    d_w_q_heads = np.einsum("kd,hkm->hdm", cache.q, d_q_heads)
    d_w_k_heads = np.einsum("kd,hkm->hdm", cache.k, d_k_heads)
    d_w_v_heads = np.einsum("kd,hkm->hdm", cache.v, d_v_heads)
    d_q = np.einsum("hkm,hdm->kd", d_q_heads, params.w_q_heads)
    d_k = np.einsum("hkm,hdm->kd", d_k_heads, params.w_k_heads)
    d_v = np.einsum("hkm,hdm->kd", d_v_heads, params.w_v_heads)
    d_w_q = cache.x.T @ d_q
    d_w_k = cache.x.T @ d_k
    d_w_v = cache.x.T @ d_v

    return np.concatenate(
        [
            d_w_q.ravel(),
            d_w_k.ravel(),
            d_w_v.ravel(),
            d_w_q_heads.ravel(),
            d_w_k_heads.ravel(),
            d_w_v_heads.ravel(),
            d_w_out.ravel(),
            d_w_fc.ravel(),
            d_b_fc.ravel(),
        ]
    )


def _check_cache(cache: ForwardCache, targets: np.ndarray, cfg: EvaluatorConfig):
    if cache.z.shape != (cache.n_samples, 2 * cfg.k_orig):
        raise ContractError("cache does not match the evaluator configuration")
    if cache.logits.shape[1] != cfg.out_dim:
        raise ContractError("cache output width does not match the task")
    if len(targets) != cache.n_samples:
        raise ContractError("targets do not match the cached batch")


def backward(
    cache: ForwardCache,
    targets: np.ndarray,
    params: EvaluatorParams,
    cfg: EvaluatorConfig,
) -> np.ndarray:
    """Exact gradient of the mean loss w.r.t. the flat parameter vector.

    Head-weight columns of features absent from the batch receive exact
    zeros (their inputs are zero in the scatter).
    """
    targets = np.asarray(targets)
    _check_cache(cache, targets, cfg)
    d_logits = _loss_grad_logits(cache.logits, targets, cfg.task)
    return _backprop(cache, d_logits, params, cfg)


def log_likelihood_grad(
    batch: SubspaceBatch, params: EvaluatorParams, cfg: EvaluatorConfig
) -> np.ndarray:
    """Gradient of the summed batch log-likelihood (flat vector).

    For cross-entropy this is exactly minus the gradient of the summed
    loss; for regression it is the residual form of a unit-variance
    Gaussian likelihood.
    """
    _, cache = forward(batch, params, cfg)
    d_logits = _log_likelihood_grad_logits(cache.logits, batch.targets, cfg.task)
    return _backprop(cache, d_logits, params, cfg)


def evaluate_metric(
    params: EvaluatorParams,
    cfg: EvaluatorConfig,
    feature_ids,
    eval_rows: np.ndarray,
    eval_targets: np.ndarray,
) -> float:
    """Scalar performance of a feature subset on an evaluation split.

    Returns minus the mean per-sample loss, so higher is better. Rows are
    consumed in order in dim-sized batches; a partial final batch is padded
    by cyclically repeating its own rows and the padding is excluded from
    the mean.
    """
    eval_rows = np.asarray(eval_rows, dtype=np.float64)
    eval_targets = np.asarray(eval_targets)
    n = eval_rows.shape[0]
    if n == 0:
        raise InvalidInputError("evaluation split is empty")
    fids = np.sort(np.asarray(feature_ids, dtype=np.int64))
    s = cfg.dim
    total = 0.0
    count = 0
    for start in range(0, n, s):
        real = min(s, n - start)
        take = np.resize(np.arange(start, start + real), s)
        batch = SubspaceBatch(
            values=eval_rows[np.ix_(take, fids)],
            feature_ids=fids,
            sample_ids=take,
            targets=eval_targets[take],
        )
        preds, _ = forward(batch, params, cfg)
        _, per_sample = loss(preds, batch.targets, cfg.task)
        total += float(per_sample[:real].sum())
        count += real
    return -(total / count)


def predict(
    params: EvaluatorParams, cfg: EvaluatorConfig, feature_ids, rows: np.ndarray
) -> np.ndarray:
    """Point predictions for arbitrary rows (class index or real value)."""
    rows = np.asarray(rows, dtype=np.float64)
    fids = np.sort(np.asarray(feature_ids, dtype=np.int64))
    n = rows.shape[0]
    s = cfg.dim
    outputs = np.empty(n, dtype=np.float64)
    for start in range(0, n, s):
        real = min(s, n - start)
        take = np.resize(np.arange(start, start + real), s)
        batch = SubspaceBatch(
            values=rows[np.ix_(take, fids)],
            feature_ids=fids,
            sample_ids=take,
            targets=np.zeros(s),
        )
        logits, _ = forward(batch, params, cfg)
        if cfg.task == CLASSIFICATION:
            outputs[start : start + real] = logits[:real].argmax(axis=1)
        else:
            outputs[start : start + real] = logits[:real, 0]
    return outputs


def save_checkpoint(path, params: EvaluatorParams, cfg: EvaluatorConfig) -> None:
    """Write params + config as a documented JSON checkpoint."""
    doc = {
        "config": {
            "dim": cfg.dim,
            "heads": cfg.heads,
            "k_orig": cfg.k_orig,
            "task": cfg.task,
            "n_classes": cfg.n_classes,
        },
        "tensors": [
            {"name": name, "shape": list(t.shape), "data": t.ravel().tolist()}
            for name, t in params.tensors()
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[EvaluatorParams, EvaluatorConfig]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    cfg = EvaluatorConfig(**doc["config"])
    tensors = {
        t["name"]: np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
        for t in doc["tensors"]
    }
    missing = set(_TENSOR_FIELDS) - set(tensors)
    if missing:
        raise InvalidInputError(f"checkpoint is missing tensors: {sorted(missing)}")
    return EvaluatorParams(**{name: tensors[name] for name in _TENSOR_FIELDS}), cfg
