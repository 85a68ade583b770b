"""Weight-sharing SuperNet for fixed-depth feedforward networks.

Every hidden layer of the SuperNet has the largest width offered by the
search space.  A child network with widths ``a`` uses only the leading
``a[i]`` units of layer ``i``: for the weight matrix feeding layer ``i`` that
is the block ``W[:a[i-1] + 1, :a[i]]`` (row 0 holds the bias).  Forward,
backward and optimizer updates all operate on those blocks, so training a
child never touches weights outside its slices.

Each hidden layer computes dense -> optional layer norm -> ReLU; the output
layer is linear, followed by the logistic loss (one output unit) or softmax
cross-entropy (several output units).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import NonFiniteError, ValidationError
from .policy import PolicyState, sample
from .space import Architecture, ResourceConstraint, SearchSpace, param_count

LN_EPS = 1e-5
CHECKPOINT_FORMAT = "tabnas.supernet"
CHECKPOINT_VERSION = 1

OPTIMIZERS = ("sgd", "sgd_momentum", "adam")
SCHEDULES = ("constant", "cosine_decay")
LOSSES = ("logistic", "softmax_cross_entropy")


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 0.01
    optimizer: str = "adam"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-3
    batch_size: int = 128
    epochs: int = 20
    lr_schedule: str = "constant"
    loss: Optional[str] = None  # inferred from output_dim when None
    layer_norm: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("weight learning rate must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"optimizer must be one of {OPTIMIZERS}")
        if self.lr_schedule not in SCHEDULES:
            raise ValidationError(f"lr_schedule must be one of {SCHEDULES}")
        if self.loss is not None and self.loss not in LOSSES:
            raise ValidationError(f"loss must be one of {LOSSES}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("batch_size must be >= 1 and epochs >= 0")

    def learning_rate_at(self, progress: float) -> float:
        if self.lr_schedule == "cosine_decay":
            return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * min(max(progress, 0.0), 1.0)))
        return self.learning_rate


@dataclass(frozen=True)
class WarmupSchedule:
    fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValidationError("warmup fraction must lie in [0, 1]")


def warmup_prob(schedule: WarmupSchedule, epoch_fraction: float) -> float:
    """Probability of training the whole SuperNet: linear decay from 1 to 0."""
    if schedule.fraction <= 0.0:
        return 0.0
    return max(0.0, 1.0 - epoch_fraction / schedule.fraction)


@dataclass
class ForwardCache:
    arch: Architecture
    inputs: list  # per hidden layer: input activations with a leading ones column
    pre: list  # dense outputs z
    normed: list  # (zhat, inv_std) per layer when layer norm is on
    post: list  # inputs to ReLU
    final_input: np.ndarray
    logits: np.ndarray
    labels: np.ndarray


@dataclass
class WeightStepRecord:
    arch: Optional[Architecture]
    full_supernet: bool = False
    skipped: bool = False
    feasible: Optional[bool] = None
    loss: Optional[float] = None
    error: Optional[str] = None


def _with_bias(h: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((h.shape[0], 1)), h])


class SuperNet:
    """Shared parameters plus per-entry optimizer state."""

    def __init__(self, space: SearchSpace, layer_norm: bool = False,
                 rng: Optional[np.random.Generator] = None, init: str = "he_uniform"):
        self.space = space
        self.layer_norm = bool(layer_norm)
        self.params: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(0) if rng is None else rng
        widths = (space.input_dim, *space.max_arch)
        for i in range(space.num_layers):
            fan_in, fan_out = widths[i], widths[i + 1]
            self.params[f"hidden.{i}"] = self._init_matrix(rng, fan_in, fan_out, 6.0, init)
        self.params["output"] = self._init_matrix(rng, widths[-1], space.output_dim, 3.0, init)
        if self.layer_norm:
            for i, w in enumerate(space.max_arch):
                self.params[f"norm_scale.{i}"] = np.ones(w)
                self.params[f"norm_shift.{i}"] = np.zeros(w)
        self.reset_optimizer()

    @staticmethod
    def _init_matrix(rng, fan_in, fan_out, gain, init):
        m = np.zeros((fan_in + 1, fan_out))
        if init == "he_uniform":
            bound = math.sqrt(gain / fan_in)
            m[1:] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        elif init != "zeros":
            raise ValidationError(f"unknown init {init!r}")
        return m

    def reset_optimizer(self) -> None:
        self.slots = {
            name: {"m": np.zeros_like(p), "v": np.zeros_like(p), "t": np.zeros(p.shape, dtype=np.int64)}
            for name, p in self.params.items()
        }

    def copy(self) -> "SuperNet":
        new = object.__new__(SuperNet)
        new.space = self.space
        new.layer_norm = self.layer_norm
        new.params = {k: v.copy() for k, v in self.params.items()}
        new.slots = {k: {s: a.copy() for s, a in d.items()} for k, d in self.slots.items()}
        return new

    def slices(self, arch: Sequence[int]) -> dict[str, tuple]:
        """Index expressions selecting ``arch``'s block of every parameter."""
        arch = self.space.validate(arch)
        widths = (self.space.input_dim, *arch)
        out = {}
        for i in range(self.space.num_layers):
            out[f"hidden.{i}"] = (slice(0, widths[i] + 1), slice(0, widths[i + 1]))
            if self.layer_norm:
                out[f"norm_scale.{i}"] = (slice(0, arch[i]),)
                out[f"norm_shift.{i}"] = (slice(0, arch[i]),)
        out["output"] = (slice(0, arch[-1] + 1), slice(None))
        return out

    @property
    def loss_kind(self) -> str:
        return "logistic" if self.space.output_dim == 1 else "softmax_cross_entropy"

    # -- checkpoints -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write a JSON checkpoint: shapes plus row-major float64 data."""
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "space": self.space.to_dict(),
            "layer_norm": self.layer_norm,
            "dtype": "float64",
            "params": {
                name: {"shape": list(p.shape), "data": p.ravel().tolist()}
                for name, p in self.params.items()
            },
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path: str | Path) -> "SuperNet":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
            raise ValidationError("not a supported SuperNet checkpoint")
        sp = doc["space"]
        space = SearchSpace(tuple(map(tuple, sp["layers"])), sp["input_dim"], sp["output_dim"])
        net = cls(space, layer_norm=doc["layer_norm"], init="zeros")
        for name, entry in doc["params"].items():
            if name not in net.params:
                raise ValidationError(f"unexpected parameter {name!r} in checkpoint")
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if arr.shape != net.params[name].shape:
                raise ValidationError(f"shape mismatch for {name!r}")
            net.params[name] = arr
        return net


# -- forward / backward ------------------------------------------------------

def per_example_loss(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    if logits.shape[1] == 1:
        s = logits[:, 0]
        return np.logaddexp(0.0, s) - labels * s
    top = logits.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(logits - top).sum(axis=1))
    return lse - logits[np.arange(len(labels)), labels]


def child_forward(net: SuperNet, arch: Sequence[int], X: np.ndarray, y: np.ndarray):
    """Per-example losses of the child ``arch`` and a cache for backward."""
    arch = net.space.validate(arch)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.space.input_dim:
        raise ValidationError(f"expected features of width {net.space.input_dim}, got {X.shape}")
    y = np.asarray(y)
    sl = net.slices(arch)
    cache = ForwardCache(arch, [], [], [], [], None, None, y)
    h = X
    for i in range(net.space.num_layers):
        inp = _with_bias(h)
        z = inp @ net.params[f"hidden.{i}"][sl[f"hidden.{i}"]]
        cache.inputs.append(inp)
        cache.pre.append(z)
        if net.layer_norm:
            mu = z.mean(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(z.var(axis=1, keepdims=True) + LN_EPS)
            zhat = (z - mu) * inv_std
            cache.normed.append((zhat, inv_std))
            u = zhat * net.params[f"norm_scale.{i}"][: arch[i]] + net.params[f"norm_shift.{i}"][: arch[i]]
        else:
            u = z
        cache.post.append(u)
        h = np.maximum(u, 0.0)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(f"non-finite activations in hidden layer {i}", layer=i)
    final_input = _with_bias(h)
    logits = final_input @ net.params["output"][sl["output"]]
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite output logits", layer=net.space.num_layers)
    cache.final_input = final_input
    cache.logits = logits
    return per_example_loss(logits, y), cache


def child_backward(net: SuperNet, cache: ForwardCache) -> dict[str, np.ndarray]:
    """Gradients of the *mean* minibatch loss, shaped like the child's slices."""
    arch = cache.arch
    B = cache.logits.shape[0]
    if cache.logits.shape[1] == 1:
        s = cache.logits[:, 0]
        d = (0.5 * (1.0 + np.tanh(0.5 * s)) - cache.labels)[:, None]
    else:
        e = np.exp(cache.logits - cache.logits.max(axis=1, keepdims=True))
        d = e / e.sum(axis=1, keepdims=True)
        d[np.arange(B), cache.labels] -= 1.0
    d = d / B
    grads = {}
    W_out = net.params["output"][: arch[-1] + 1]
    grads["output"] = cache.final_input.T @ d
    dh = d @ W_out[1:].T
    for i in reversed(range(net.space.num_layers)):
        du = dh * (cache.post[i] > 0.0)
        if net.layer_norm:
            zhat, inv_std = cache.normed[i]
            gamma = net.params[f"norm_scale.{i}"][: arch[i]]
            grads[f"norm_scale.{i}"] = (du * zhat).sum(axis=0)
            grads[f"norm_shift.{i}"] = du.sum(axis=0)
            dzhat = du * gamma
            dz = inv_std * (dzhat - dzhat.mean(axis=1, keepdims=True)
                            - zhat * (dzhat * zhat).mean(axis=1, keepdims=True))
        else:
            dz = du
        grads[f"hidden.{i}"] = cache.inputs[i].T @ dz
        if i > 0:
            W = net.params[f"hidden.{i}"][: cache.inputs[i].shape[1]]
            dh = dz @ W[1:, : arch[i]].T
    return grads


def apply_gradients(net: SuperNet, arch: Sequence[int], grads: dict[str, np.ndarray],
                    hyper: TrainHyper, lr: float) -> None:
    """Descend ``grads`` on ``arch``'s slices only, advancing only their optimizer slots."""
    sl = net.slices(arch)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name}")
    for name, g in grads.items():
        idx = sl[name]
        p = net.params[name]
        slot = net.slots[name]
        if hyper.optimizer == "sgd":
            p[idx] -= lr * g
        elif hyper.optimizer == "sgd_momentum":
            slot["m"][idx] = hyper.momentum * slot["m"][idx] + g
            p[idx] -= lr * slot["m"][idx]
        else:
            b1, b2 = hyper.adam_beta1, hyper.adam_beta2
            slot["t"][idx] += 1
            t = slot["t"][idx]
            slot["m"][idx] = b1 * slot["m"][idx] + (1 - b1) * g
            slot["v"][idx] = b2 * slot["v"][idx] + (1 - b2) * g * g
            m_hat = slot["m"][idx] / (1 - b1**t)
            v_hat = slot["v"][idx] / (1 - b2**t)
            p[idx] -= lr * m_hat / (np.sqrt(v_hat) + hyper.adam_eps)


def train_child_step(net: SuperNet, arch: Sequence[int], X, y, hyper: TrainHyper, lr: float) -> float:
    losses, cache = child_forward(net, arch, X, y)
    loss = float(losses.mean())
    if not math.isfinite(loss):
        raise NonFiniteError("non-finite training loss")
    apply_gradients(net, arch, child_backward(net, cache), hyper, lr)
    return loss


def weight_step(net: SuperNet, policy: PolicyState, hyper: TrainHyper, schedule: WarmupSchedule,
                epoch_fraction: float, batch: tuple[np.ndarray, np.ndarray], rng: np.random.Generator,
                skip_infeasible: bool = False, constraint: Optional[ResourceConstraint] = None,
                lr: Optional[float] = None) -> tuple[SuperNet, WeightStepRecord]:
    """One shared-weight update on a full-SuperNet or policy-sampled child.

    Draw order: during warmup one uniform coin decides the full-SuperNet
    branch; otherwise one policy sample gives the child.
    """
    lr = hyper.learning_rate_at(epoch_fraction) if lr is None else lr
    full = False
    if epoch_fraction < schedule.fraction:
        full = rng.random() < warmup_prob(schedule, epoch_fraction)
    arch = net.space.max_arch if full else sample(policy, rng).arch
    rec = WeightStepRecord(arch=arch, full_supernet=full)
    if constraint is not None:
        rec.feasible = constraint.is_feasible(param_count(arch, net.space))
    if skip_infeasible and not full and rec.feasible is False:
        rec.skipped = True
        return net, rec
    try:
        rec.loss = train_child_step(net, arch, batch[0], batch[1], hyper, lr)
    except NonFiniteError as exc:
        rec.skipped = True
        rec.error = str(exc)
    return net, rec


def one_shot_validation_loss(net: SuperNet, arch: Sequence[int], batches) -> float:
    """Mean per-example loss of the sliced child over ``(X, y)`` batches."""
    if isinstance(batches, tuple):
        batches = [batches]
    total, count = 0.0, 0
    for X, y in batches:
        losses, _ = child_forward(net, arch, X, y)
        total += float(losses.sum())
        count += len(losses)
    return total / count


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_supernet(space: SearchSpace, dataset, hyper: TrainHyper, warmup: WarmupSchedule = WarmupSchedule(),
                   seed: int = 0, policy: Optional[PolicyState] = None) -> SuperNet:
    """Shared-weight training alone, with the controller frozen.

    Children come from ``policy`` (uniform by default) for ``hyper.epochs``
    passes over the training rows, with the usual full-SuperNet warmup.
    """
    rng = np.random.default_rng(seed)
    net = SuperNet(space, layer_norm=hyper.layer_norm, rng=rng)
    policy = policy or PolicyState.initial(space)
    Xtr, ytr = dataset.train
    n = len(ytr)
    total = hyper.epochs * max(1, math.ceil(n / hyper.batch_size))
    step = 0
    for _ in range(hyper.epochs):
        for idx in iterate_minibatches(n, hyper.batch_size, rng):
            net, rec = weight_step(net, policy, hyper, warmup, step / total, (Xtr[idx], ytr[idx]), rng)
            if rec.error:
                raise NonFiniteError(rec.error)
            step += 1
    return net


def standalone_train(arch: Sequence[int], dataset, hyper: TrainHyper, seed: int = 0):
    """Train ``arch`` alone from a fresh initialization; returns (val loss, net)."""
    arch = tuple(int(h) for h in arch)
    space = SearchSpace(tuple((h,) for h in arch), dataset.num_features, dataset.output_dim)
    rng = np.random.default_rng(seed)
    net = SuperNet(space, layer_norm=hyper.layer_norm, rng=rng)
    Xtr, ytr = dataset.train
    n = len(ytr)
    steps_per_epoch = max(1, math.ceil(n / hyper.batch_size))
    total = hyper.epochs * steps_per_epoch
    step = 0
    for _ in range(hyper.epochs):
        for idx in iterate_minibatches(n, hyper.batch_size, rng):
            lr = hyper.learning_rate_at(step / max(total, 1))
            train_child_step(net, arch, Xtr[idx], ytr[idx], hyper, lr)
            step += 1
    loss = one_shot_validation_loss(net, arch, dataset.validation)
    if not math.isfinite(loss):
        raise NonFiniteError("stand-alone training diverged")
    return loss, net
