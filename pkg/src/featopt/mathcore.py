"""Low-level numeric kernels: stable softmax, Adam updates, seeded randomness.

Everything is float64 numpy. The models in this package are tiny, so
precision and reproducibility win over raw speed everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError, ShapeError


def row_softmax(m: np.ndarray) -> np.ndarray:
    """Softmax along the last axis with per-row max subtraction.

    Accepts any array whose trailing axis holds the logits; rows of the
    result sum to 1 and every entry lies in (0, 1].
    """
    m = np.asarray(m, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("softmax input must be finite")
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class AdamState:
    """First/second moment estimates plus the update counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update; returns (new params, advanced state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(
            f"adam_step length mismatch: params {params.shape}, grads "
            f"{grads.shape}, moments {state.m.shape}"
        )
    if lr <= 0:
        raise InvalidArgumentError("learning rate must be positive")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1**state.step)
    v_hat = state.v / (1.0 - state.beta2**state.step)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, state


class RandomSource:
    """Seed-reproducible random stream (PCG64).

    Identical seeds yield identical draw sequences on every platform. A
    single instance must not be shared across threads; derive fresh ones
    with :meth:`derive` instead.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def next_uniform(self) -> float:
        """One draw from U[0, 1)."""
        return float(self._gen.random())

    def uniforms(self, count: int) -> np.ndarray:
        return self._gen.random(count)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def derive(self, tag: int) -> "RandomSource":
        """Independent stream for a derived task (seed xor a spread tag)."""
        mixed = (self.seed ^ ((tag + 1) * 0x9E3779B97F4A7C15)) & 0x7FFFFFFFFFFFFFFF
        return RandomSource(mixed)
