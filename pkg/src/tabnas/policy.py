"""Factorized softmax controller over layer sizes.

Each hidden layer owns an independent categorical distribution given by a
softmax over its logits.  All logits live in one flat vector; ``offsets``
locate each layer's block.  Gradients with respect to the logits use the
same flat layout, which keeps the optimizer and the finite-difference checks
simple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import NonFiniteError, ValidationError
from .space import Architecture, SearchSpace


@dataclass(frozen=True)
class PolicyState:
    space: SearchSpace
    logits: np.ndarray
    first_moment: np.ndarray
    second_moment: np.ndarray
    step: int = 0
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-3

    @classmethod
    def initial(cls, space: SearchSpace, learning_rate: float = 0.1, **adam) -> "PolicyState":
        """All-zero logits, i.e. uniform sampling in every layer."""
        n = sum(space.num_choices)
        if learning_rate <= 0:
            raise ValidationError("RL learning rate must be positive")
        return cls(space, np.zeros(n), np.zeros(n), np.zeros(n), 0, float(learning_rate), **adam)

    def __post_init__(self):
        n = sum(self.space.num_choices)
        for name in ("logits", "first_moment", "second_moment"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValidationError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.flags.writeable = False  # cached probabilities rely on this
            object.__setattr__(self, name, arr)

    @property
    def offsets(self) -> np.ndarray:
        return self.space.offsets

    @cached_property
    def _softmax(self) -> tuple[np.ndarray, np.ndarray]:
        z, e, tot = _shifted(self.logits, self.offsets)
        return e / tot, z - np.log(tot)

    @property
    def flat_probs(self) -> np.ndarray:
        return self._softmax[0]

    @property
    def flat_log_probs(self) -> np.ndarray:
        return self._softmax[1]

    @cached_property
    def cdfs(self) -> list[np.ndarray]:
        out = []
        for p in self.split(self.flat_probs):
            c = np.cumsum(p)
            c[-1] = 1.0
            out.append(c)
        return out

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        """Views of a flat logit-shaped vector, one per layer."""
        o = self.offsets
        return [flat[o[i]:o[i + 1]] for i in range(self.space.num_layers)]

    def with_logits(self, logits: np.ndarray) -> "PolicyState":
        return replace(self, logits=np.asarray(logits, dtype=float).copy())


@dataclass(frozen=True)
class SampleRecord:
    arch: Architecture
    choice_indices: tuple[int, ...]
    log_prob: float


@dataclass
class BaselineState:
    """Bias-corrected exponential moving average of the quality reward."""

    numerator: float = 0.0
    denominator: float = 0.0
    decay: float = 0.9

    @property
    def value(self) -> float:
        if self.denominator <= 0:
            return 0.0
        return self.numerator / self.denominator


def _shifted(logits: np.ndarray, offsets: np.ndarray):
    starts = offsets[:-1]
    sizes = offsets[1:] - offsets[:-1]
    z = logits - np.repeat(np.maximum.reduceat(logits, starts), sizes)
    e = np.exp(z)
    return z, e, np.repeat(np.add.reduceat(e, starts), sizes)


def softmax_rows(logits: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Softmax applied separately to each ``offsets`` block of a flat vector."""
    _, e, tot = _shifted(np.asarray(logits, dtype=float), offsets)
    return e / tot


def log_softmax_rows(logits: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    z, _, tot = _shifted(np.asarray(logits, dtype=float), offsets)
    return z - np.log(tot)


def probabilities(state: PolicyState) -> list[np.ndarray]:
    """Per-layer sampling probabilities."""
    return state.split(state.flat_probs)


def flat_probabilities(state: PolicyState) -> np.ndarray:
    return state.flat_probs.copy()


def sample_indices(state: PolicyState, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` architectures as an ``(n, L)`` array of choice indices.

    Layers are drawn in order, all ``n`` draws of layer 1 first, each by
    inverting the layer's CDF at one ``rng.random`` uniform.
    """
    L = state.space.num_layers
    u = rng.random((L, n))  # same stream as L consecutive rng.random(n) calls
    out = np.empty((n, L), dtype=np.int64)
    for i, cdf in enumerate(state.cdfs):
        out[:, i] = np.searchsorted(cdf, u[i], side="right")
    return out


def log_prob_indices(state: PolicyState, indices: np.ndarray) -> np.ndarray:
    """Log-probability of each row of ``indices`` under ``state``."""
    indices = np.atleast_2d(indices)
    return state.flat_log_probs[indices + state.offsets[:-1]].sum(axis=1)


def record_from_indices(state: PolicyState, indices: Sequence[int]) -> SampleRecord:
    idx = tuple(int(j) for j in indices)
    arch = state.space.from_indices(idx)
    flat = state.flat_log_probs
    return SampleRecord(arch=arch, choice_indices=idx,
                        log_prob=float(sum(flat[o + j] for o, j in zip(state.offsets, idx))))


def sample(state: PolicyState, rng: np.random.Generator) -> SampleRecord:
    return record_from_indices(state, sample_indices(state, rng, 1)[0])


def _check_record(state: PolicyState, record: SampleRecord) -> None:
    if len(record.choice_indices) != state.space.num_layers:
        raise ValidationError("sample record does not match the policy's layer count")
    for j, c in zip(record.choice_indices, state.space.num_choices):
        if not 0 <= j < c:
            raise ValidationError(f"choice index {j} out of range for a {c}-way layer")


def grad_log_prob(state: PolicyState, record: SampleRecord) -> np.ndarray:
    """Gradient of log P(arch) w.r.t. the flat logits: one-hot minus softmax."""
    _check_record(state, record)
    g = -flat_probabilities(state)
    g[np.asarray(record.choice_indices) + state.offsets[:-1]] += 1.0
    return g


def weighted_mean_score(state: PolicyState, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_k w_k grad log P(z_k) / sum_k w_k`` for index rows ``z_k``.

    Computed as the weighted empirical choice frequencies minus the softmax,
    which avoids materializing per-sample gradients.
    """
    indices = np.atleast_2d(indices)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total <= 0:
        raise ValidationError("weights must have a positive sum")
    counts = np.zeros(state.logits.shape[0])
    o = state.offsets
    for i in range(state.space.num_layers):
        counts[o[i]:o[i + 1]] = np.bincount(indices[:, i], weights=w, minlength=o[i + 1] - o[i])
    return counts / total - state.flat_probs


def baseline_update(b: BaselineState, quality: float) -> BaselineState:
    g = b.decay
    return BaselineState(
        numerator=g * b.numerator + (1 - g) * quality,
        denominator=g * b.denominator + (1 - g),
        decay=g,
    )


def adam_step(state: PolicyState, grad: np.ndarray) -> PolicyState:
    """One bias-corrected Adam step that *ascends* ``grad``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != state.logits.shape:
        raise ValidationError(f"gradient shape {grad.shape} != logits shape {state.logits.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteError("non-finite entries in logit gradient; step aborted")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.first_moment + (1 - b1) * grad
    v = b2 * state.second_moment + (1 - b2) * (grad * grad)
    # bias corrections folded into scalars: m_hat / (sqrt(v_hat) + eps)
    c1 = state.learning_rate / (1 - b1**t)
    c2 = 1.0 / math.sqrt(1 - b2**t)
    logits = state.logits + c1 * m / (c2 * np.sqrt(v) + state.eps)
    return PolicyState(state.space, logits, m, v, t, state.learning_rate,
                       state.beta1, state.beta2, state.eps)


def most_probable(state: PolicyState) -> Architecture:
    """Per-layer argmax architecture (the joint mode of a factorized policy)."""
    return state.space.from_indices([int(np.argmax(p)) for p in probabilities(state)])
