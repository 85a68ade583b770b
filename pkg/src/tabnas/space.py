"""Search spaces of fixed-depth feedforward networks and their parameter cost.

An architecture is a tuple of hidden-layer widths, one entry per layer, each
taken from that layer's list of candidate sizes.  Most numerical code works
with *choice indices* (position of the width inside the candidate list), so
both representations are supported here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import EnumerationTooLarge, ValidationError

Architecture = tuple[int, ...]

#: Largest space we are willing to enumerate exactly.
ENUMERATION_LIMIT = 10**7

UNBOUNDED = math.inf


@dataclass(frozen=True)
class SearchSpace:
    layer_choices: tuple[tuple[int, ...], ...]
    input_dim: int
    output_dim: int

    def __post_init__(self):
        choices = tuple(tuple(int(s) for s in layer) for layer in self.layer_choices)
        object.__setattr__(self, "layer_choices", choices)
        if len(choices) < 1:
            raise ValidationError("search space needs at least one hidden layer")
        for i, layer in enumerate(choices):
            if len(layer) < 1:
                raise ValidationError(f"layer {i} has no size choices")
            if any(s < 1 for s in layer):
                raise ValidationError(f"layer {i} has a non-positive size")
            if any(b <= a for a, b in zip(layer, layer[1:])):
                raise ValidationError(f"layer {i} sizes must be strictly increasing")
        if int(self.input_dim) < 1 or int(self.output_dim) < 1:
            raise ValidationError("input_dim and output_dim must be positive")
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "output_dim", int(self.output_dim))

    @property
    def num_layers(self) -> int:
        return len(self.layer_choices)

    @property
    def num_choices(self) -> tuple[int, ...]:
        return tuple(len(layer) for layer in self.layer_choices)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start of each layer's block in a flat per-choice vector, plus the total."""
        out = np.concatenate([[0], np.cumsum(self.num_choices)]).astype(np.int64)
        out.flags.writeable = False
        return out

    @property
    def size(self) -> int:
        """Number of architectures in the space (exact integer)."""
        return math.prod(self.num_choices)

    @property
    def max_arch(self) -> Architecture:
        return tuple(layer[-1] for layer in self.layer_choices)

    def validate(self, arch: Sequence[int]) -> Architecture:
        arch = tuple(int(h) for h in arch)
        if len(arch) != self.num_layers:
            raise ValidationError(
                f"architecture {arch} has {len(arch)} layers, space has {self.num_layers}"
            )
        for i, (h, layer) in enumerate(zip(arch, self.layer_choices)):
            if h not in layer:
                raise ValidationError(f"size {h} is not a choice for layer {i}: {layer}")
        return arch

    def to_indices(self, arch: Sequence[int]) -> tuple[int, ...]:
        arch = self.validate(arch)
        return tuple(layer.index(h) for h, layer in zip(arch, self.layer_choices))

    def from_indices(self, indices: Sequence[int]) -> Architecture:
        if len(indices) != self.num_layers:
            raise ValidationError("index vector length does not match the space")
        try:
            return tuple(layer[int(j)] for j, layer in zip(indices, self.layer_choices))
        except IndexError:
            raise ValidationError(f"choice index out of range: {tuple(indices)}") from None

    def to_dict(self) -> dict:
        return {
            "layers": [list(layer) for layer in self.layer_choices],
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
        }


@dataclass(frozen=True)
class ResourceConstraint:
    """Inclusive upper bound on the parameter count.  ``math.inf`` disables it."""

    limit: float

    def __post_init__(self):
        if not (self.limit == UNBOUNDED or float(self.limit).is_integer()):
            raise ValidationError("parameter limit must be an integer or unbounded")
        if self.limit < 0:
            raise ValidationError("parameter limit must be nonnegative")

    def is_feasible(self, cost: int) -> bool:
        return cost <= self.limit


def param_count(arch: Sequence[int], space: SearchSpace) -> int:
    """Weights plus biases of every dense layer, output layer included."""
    arch = space.validate(arch)
    widths = (space.input_dim, *arch, space.output_dim)
    return sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))


def _grid_widths(space: SearchSpace) -> list[np.ndarray]:
    """Per-layer width arrays broadcast against each other over the full grid."""
    L = space.num_layers
    out = []
    for i, layer in enumerate(space.layer_choices):
        shape = [1] * L
        shape[i] = len(layer)
        out.append(np.asarray(layer, dtype=np.int64).reshape(shape))
    return out


def param_count_grid(space: SearchSpace) -> np.ndarray:
    """Parameter counts of every architecture, shaped ``space.num_choices``."""
    _check_enumerable(space)
    h = _grid_widths(space)
    total = (space.input_dim + 1) * h[0]
    for prev, cur in zip(h[:-1], h[1:]):
        total = total + (prev + 1) * cur
    total = total + (h[-1] + 1) * space.output_dim
    return np.broadcast_to(total, space.num_choices).copy()


def param_counts_from_indices(space: SearchSpace, indices: np.ndarray) -> np.ndarray:
    """Parameter counts for rows of choice indices; works for any space size."""
    indices = np.atleast_2d(indices)
    widths = [np.asarray(layer, dtype=np.int64)[indices[:, i]]
              for i, layer in enumerate(space.layer_choices)]
    total = (space.input_dim + 1) * widths[0]
    for prev, cur in zip(widths[:-1], widths[1:]):
        total = total + (prev + 1) * cur
    return total + (widths[-1] + 1) * space.output_dim


def feasible_mask(space: SearchSpace, constraint: ResourceConstraint) -> np.ndarray:
    return param_count_grid(space) <= constraint.limit


def _check_enumerable(space: SearchSpace) -> None:
    if space.size > ENUMERATION_LIMIT:
        raise EnumerationTooLarge(
            f"space has {space.size} architectures (> {ENUMERATION_LIMIT}); "
            "use Monte-Carlo estimation instead"
        )


def enumerate_feasible(space: SearchSpace, constraint: ResourceConstraint) -> list[Architecture]:
    """All feasible architectures, in lexicographic order of choice indices."""
    mask = feasible_mask(space, constraint)
    return [space.from_indices(idx) for idx in np.argwhere(mask)]


def feasible_indices(space: SearchSpace, constraint: ResourceConstraint) -> np.ndarray:
    """Choice-index rows (``n_feasible x L``) of the feasible set."""
    return np.argwhere(feasible_mask(space, constraint))


def iter_architectures(space: SearchSpace) -> Iterable[Architecture]:
    _check_enumerable(space)
    return itertools.product(*space.layer_choices)


def pareto_front(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Nondominated ``(param_count, loss)`` pairs, ascending in parameters.

    Duplicates collapse to one point; for equal parameter counts only the
    lowest loss survives.
    """
    pts = sorted({(p, l) for p, l in points})
    if not pts:
        raise ValidationError("pareto_front needs at least one point")
    front = []
    best = math.inf
    for params, loss in pts:
        if front and front[-1][0] == params:
            continue
        if loss < best:
            front.append((params, loss))
            best = loss
    return front
