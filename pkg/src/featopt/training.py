"""Training loops: pre-training, drift-penalized incremental fitting, and
the parameter-importance estimate that weights the drift penalty.

The learning-rate schedule and stopping rules are fixed constants of the
method: initial rate 0.001 decayed by 0.9 every 30 epochs, early stop after
10 epochs without a strict improvement of the running-minimum loss, epoch
caps of 50 (pre-training) and 200 (incremental fitting).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attention import EvaluatorConfig, EvaluatorParams, backward, forward
from .attention import log_likelihood_grad, loss
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidArgumentError,
    InvalidInputError,
    ShapeError,
)
from .mathcore import AdamState, RandomSource, adam_step


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epoch_cap: int = 50
    incremental_epoch_cap: int = 200
    patience: int = 10
    initial_lr: float = 0.001
    decay_factor: float = 0.9
    decay_interval: int = 30
    ewc_lambda: float = 10.0

    def __post_init__(self):
        if self.pretrain_epoch_cap < 1 or self.incremental_epoch_cap < 1:
            raise ConfigError("epoch caps must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigError("decay factor must be in (0, 1]")
        if self.decay_interval < 1:
            raise ConfigError("decay interval must be >= 1")
        if self.initial_lr <= 0:
            raise ConfigError("initial learning rate must be positive")
        if self.ewc_lambda < 0:
            raise ConfigError("ewc_lambda must be >= 0")


@dataclass
class TrainRecord:
    """What one training run did: epoch losses, timing, and why it stopped."""

    epochs: int
    losses: list[float] = field(default_factory=list)
    duration_ms: float = 0.0
    stop_reason: str = "cap"  # cap | early-stop | skipped

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "losses": list(self.losses),
            "duration_ms": self.duration_ms,
            "stop_reason": self.stop_reason,
        }


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Stepwise-decayed learning rate for a given epoch index."""
    if epoch < 0:
        raise InvalidArgumentError("epoch must be >= 0")
    return cfg.initial_lr * cfg.decay_factor ** (epoch // cfg.decay_interval)


def early_stop(loss_history, patience: int) -> bool:
    """True once the minimum loss has not strictly improved for ``patience``
    consecutive epochs."""
    history = list(loss_history)
    if not history:
        raise InvalidInputError("loss history must not be empty")
    best_index = history.index(min(history))
    return (len(history) - 1 - best_index) >= patience


def ewc_penalty(theta, theta_prev, fisher_diag, lam: float) -> float:
    """(lam / 2) * sum_j G_j (theta_j - theta_prev_j)^2."""
    theta = np.asarray(theta, dtype=np.float64)
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    fisher_diag = np.asarray(fisher_diag, dtype=np.float64)
    if theta.shape != theta_prev.shape or theta.shape != fisher_diag.shape:
        raise ShapeError("theta, theta_prev and the Fisher diagonal must match")
    drift = theta - theta_prev
    return float(0.5 * lam * np.sum(fisher_diag * drift * drift))


def ewc_penalty_grad(theta, theta_prev, fisher_diag, lam: float) -> np.ndarray:
    """Gradient of :func:`ewc_penalty` w.r.t. theta."""
    theta = np.asarray(theta, dtype=np.float64)
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    fisher_diag = np.asarray(fisher_diag, dtype=np.float64)
    if theta.shape != theta_prev.shape or theta.shape != fisher_diag.shape:
        raise ShapeError("theta, theta_prev and the Fisher diagonal must match")
    return lam * fisher_diag * (theta - theta_prev)


def fisher(
    params: EvaluatorParams, batches, cfg: EvaluatorConfig
) -> np.ndarray:
    """Diagonal parameter-importance estimate from the previous batches.

    Mean over batches of the elementwise-squared summed log-likelihood
    gradient; entries are nonnegative by construction.
    """
    batches = list(batches)
    if not batches:
        raise InvalidArgumentError("fisher needs at least one batch")
    acc = np.zeros(params.size)
    for batch in batches:
        g = log_likelihood_grad(batch, params, cfg)
        acc += g * g
    return acc / len(batches)


def _aggregate_sample_losses(ids_chunks, loss_chunks) -> dict[int, float]:
    ids = np.concatenate(ids_chunks)
    losses = np.concatenate(loss_chunks)
    uniq, inverse = np.unique(ids, return_inverse=True)
    sums = np.bincount(inverse, weights=losses)
    counts = np.bincount(inverse)
    return dict(zip(uniq.tolist(), (sums / counts).tolist()))


def fit_batches(
    params: EvaluatorParams,
    batches,
    ecfg: EvaluatorConfig,
    tcfg: TrainConfig,
    rng: RandomSource,
    epoch_cap: int,
    penalty: tuple[np.ndarray, np.ndarray, float] | None = None,
) -> tuple[TrainRecord, dict[int, float]]:
    """Shared training engine.

    Shuffles batch order every epoch, steps Adam per batch with the decayed
    learning rate, stops at the cap or on early stop. ``penalty`` is an
    optional (theta_prev, fisher_diag, lam) triple whose quadratic drift
    term is added to both the tracked loss and the gradient. Returns the
    record plus the final epoch's mean loss per global sample id.
    """
    batches = list(batches)
    if not batches:
        raise InvalidArgumentError("need at least one batch")
    start = time.perf_counter()
    state = AdamState.zeros(params.size)
    history: list[float] = []
    sample_losses: dict[int, float] = {}
    stop_reason = "cap"
    for epoch in range(epoch_cap):
        lr = lr_at(epoch, tcfg)
        order = rng.permutation(len(batches))
        epoch_loss = 0.0
        id_chunks, loss_chunks = [], []
        for b_index in order:
            batch = batches[b_index]
            try:
                preds, cache = forward(batch, params, ecfg)
                data_loss, per_sample = loss(preds, batch.targets, ecfg.task)
            except InvalidInputError as exc:
                # Parameter blow-up surfaces as non-finite activations.
                raise DivergenceError(
                    f"non-finite values at epoch {epoch}: {exc}"
                ) from exc
            grads = backward(cache, batch.targets, params, ecfg)
            objective = data_loss
            flat = params.to_flat()
            if penalty is not None:
                theta_prev, fisher_diag, lam = penalty
                objective += ewc_penalty(flat, theta_prev, fisher_diag, lam)
                grads = grads + ewc_penalty_grad(flat, theta_prev, fisher_diag, lam)
            if not np.isfinite(objective):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            flat, state = adam_step(flat, grads, state, lr)
            params.set_flat(flat)
            epoch_loss += objective
            id_chunks.append(batch.sample_ids)
            loss_chunks.append(per_sample)
        history.append(epoch_loss / len(batches))
        sample_losses = _aggregate_sample_losses(id_chunks, loss_chunks)
        if early_stop(history, tcfg.patience):
            stop_reason = "early-stop"
            break
    record = TrainRecord(
        epochs=len(history),
        losses=history,
        duration_ms=(time.perf_counter() - start) * 1000.0,
        stop_reason=stop_reason,
    )
    return record, sample_losses


def pretrain(
    params: EvaluatorParams,
    batches,
    ecfg: EvaluatorConfig,
    tcfg: TrainConfig,
    rng: RandomSource,
) -> tuple[EvaluatorParams, TrainRecord, dict[int, float]]:
    """Initial fit on randomly assembled subspaces (cap 50 epochs)."""
    record, sample_losses = fit_batches(
        params, batches, ecfg, tcfg, rng, tcfg.pretrain_epoch_cap
    )
    return params, record, sample_losses


def incremental_fit(
    params: EvaluatorParams,
    batches,
    fisher_diag: np.ndarray,
    ecfg: EvaluatorConfig,
    tcfg: TrainConfig,
    rng: RandomSource,
) -> tuple[EvaluatorParams, TrainRecord, dict[int, float]]:
    """Fit new batches while penalizing drift on important parameters.

    Minimizes batch loss + (lam/2) * sum G_j (theta_j - theta_prev_j)^2,
    where theta_prev is the parameter vector at entry (cap 200 epochs, the
    learning-rate schedule restarts at epoch 0).
    """
    fisher_diag = np.asarray(fisher_diag, dtype=np.float64)
    if fisher_diag.shape != (params.size,):
        raise ShapeError("Fisher diagonal length does not match the parameters")
    if np.any(fisher_diag < 0) or not np.all(np.isfinite(fisher_diag)):
        raise InvalidInputError("Fisher diagonal must be finite and nonnegative")
    theta_prev = params.to_flat().copy()
    record, sample_losses = fit_batches(
        params,
        batches,
        ecfg,
        tcfg,
        rng,
        tcfg.incremental_epoch_cap,
        penalty=(theta_prev, fisher_diag, tcfg.ewc_lambda),
    )
    return params, record, sample_losses
