"""Tabulated validation losses for controller-only experiments.

A :class:`LossTable` assigns a loss to every architecture of a search space,
with optional Gaussian query noise.  Searching against a table isolates the
RL controller from SuperNet training.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import TableError, ValidationError
from .space import (
    Architecture,
    ResourceConstraint,
    SearchSpace,
    feasible_mask,
    param_count,
    param_count_grid,
)


@dataclass
class LossTable:
    space: SearchSpace
    losses: np.ndarray  # shape == space.num_choices, indexed by choice indices
    noise_sd: float = 0.0

    def __post_init__(self):
        self.losses = np.asarray(self.losses, dtype=float)
        if self.losses.shape != self.space.num_choices:
            raise TableError(f"loss array shape {self.losses.shape} != {self.space.num_choices}")
        if not np.all(np.isfinite(self.losses)):
            raise TableError("loss table contains non-finite entries")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be nonnegative")

    def loss(self, arch: Sequence[int]) -> float:
        """Noise-free table entry."""
        return float(self.losses[self.space.to_indices(arch)])

    def feasible_optimum(self, constraint: ResourceConstraint) -> tuple[Architecture, float]:
        masked = np.where(feasible_mask(self.space, constraint), self.losses, np.inf)
        flat = int(np.argmin(masked))
        if not np.isfinite(masked.flat[flat]):
            raise ValidationError("no feasible architecture in the table's space")
        idx = np.unravel_index(flat, self.space.num_choices)
        return self.space.from_indices(idx), float(masked.flat[flat])

    def __eq__(self, other):
        return (isinstance(other, LossTable) and self.space == other.space
                and self.noise_sd == other.noise_sd and np.array_equal(self.losses, other.losses))


def evaluate(table: LossTable, arch: Sequence[int], rng: Optional[np.random.Generator] = None) -> float:
    """Table loss of ``arch`` plus one Gaussian noise draw when ``noise_sd > 0``."""
    value = table.loss(arch)
    if table.noise_sd > 0:
        if rng is None:
            raise ValidationError("a generator is required for a noisy table")
        value += table.noise_sd * float(rng.standard_normal())
    return value


# -- toy example ---------------------------------------------------------------

TOY_CHOICES = (2, 3, 4)
TOY_LIMIT = 25

# Rows: first hidden layer 2, 3, 4; columns: second hidden layer 2, 3, 4.
# Strictly decreasing in both sizes; (4, 2) is the only feasible minimizer.
# First-layer width dominates among feasible cells, and the infeasible
# (3, 4) cell gains a lot from its extra parameters, so a cost penalty of
# weight 1 is too weak to keep a factorized controller feasible while a
# weight of 2 pushes it onto the 25-parameter (3, 3) cell.
TOY_LOSSES = np.array([
    [0.950, 0.948, 0.946],
    [0.880, 0.878, 0.580],
    [0.810, 0.760, 0.480],
])


def toy_space() -> SearchSpace:
    return SearchSpace((TOY_CHOICES, TOY_CHOICES), input_dim=2, output_dim=1)


def toy_example(losses: Optional[np.ndarray] = None, noise_sd: float = 0.0):
    """The 3x3 two-layer space with a 25-parameter limit and its loss table."""
    table = LossTable(toy_space(), TOY_LOSSES if losses is None else losses, noise_sd)
    return table, ResourceConstraint(TOY_LIMIT)


# -- synthetic planted-optimum tables ---------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    space: SearchSpace
    planted_optimum: Architecture
    constraint: Optional[ResourceConstraint] = None  # defaults to param_count(planted)
    seed: int = 0
    base_loss: float = 0.60
    capacity_gain: float = 0.05  # total backbone drop in loss from narrowest to planted widths
    depression: float = 0.02
    radius: int = 5  # L1 radius, in choice-index steps, of the planted region
    jitter: float = 0.002
    margin: float = 0.001
    noise_sd: float = 0.0

    def resolved_constraint(self) -> ResourceConstraint:
        if self.constraint is not None:
            return self.constraint
        return ResourceConstraint(param_count(self.planted_optimum, self.space))


def _layer_weights(space: SearchSpace, planted: Architecture) -> np.ndarray:
    """Log-width weights that make ``planted`` the constrained optimum of the backbone.

    With the backbone ``-sum_i w_i log h_i`` and the parameter count as a
    posynomial in ``h``, the stationarity condition at ``planted`` is
    ``w_i ∝ h_i * dT/dh_i``.
    """
    widths = (space.input_dim, *planted, space.output_dim)
    w = np.empty(len(planted))
    for i in range(len(planted)):
        dT = (widths[i] + 1) + widths[i + 2]  # fan-in side plus fan-out side
        w[i] = planted[i] * dT
    return w / w.sum()


def _index_distance(space: SearchSpace, arch: Architecture) -> np.ndarray:
    """L1 distance, in choice-index steps, from ``arch`` to every grid cell."""
    p = space.to_indices(arch)
    grids = np.meshgrid(*[np.arange(c) for c in space.num_choices], indexing="ij")
    return sum(np.abs(g - pi) for g, pi in zip(grids, p))


def planted_region(spec: SyntheticSpec) -> np.ndarray:
    """Boolean grid marking architectures within ``radius`` of the planted one."""
    return _index_distance(spec.space, spec.planted_optimum) <= spec.radius


def synthesize(spec: SyntheticSpec) -> LossTable:
    """Loss table with a monotone backbone and a planted feasible optimum.

    The backbone decreases in every layer width.  Inside a small L1 ball
    around the planted architecture a cone-shaped depression is subtracted;
    finally the planted entry is lowered, if needed, so it beats every other
    feasible entry by at least ``margin``.
    """
    space = spec.space
    planted = space.validate(spec.planted_optimum)
    constraint = spec.resolved_constraint()
    costs = param_count_grid(space)
    if param_count(planted, space) > constraint.limit:
        raise ValidationError("planted optimum violates the resource constraint")
    rng = np.random.default_rng(spec.seed)
    w = _layer_weights(space, planted)
    mins = np.array([layer[0] for layer in space.layer_choices], dtype=float)
    scale = spec.capacity_gain / float(np.dot(w, np.log(np.array(planted) / mins)) or 1.0)

    L = space.num_layers
    loss = np.full(space.num_choices, spec.base_loss)
    for i, layer in enumerate(space.layer_choices):
        shape = [1] * L
        shape[i] = len(layer)
        drop = scale * w[i] * np.log(np.asarray(layer) / layer[0])
        if spec.jitter > 0 and len(layer) > 1:
            steps = rng.uniform(0, 1, size=len(layer) - 1)
            drop = drop + spec.jitter * np.concatenate([[0.0], np.cumsum(steps)]) / (len(layer) - 1)
        loss = loss - drop.reshape(shape)

    # Cone in L1 index distance: every single-layer step towards the planted
    # architecture deepens the depression by depression / (radius + 1).
    p_idx = np.array(space.to_indices(planted))
    dist = _index_distance(space, planted)
    loss = loss - spec.depression * np.clip(1.0 - dist / (spec.radius + 1), 0.0, None)

    feas = costs <= constraint.limit
    others = np.where(feas, loss, np.inf)
    others[tuple(p_idx)] = np.inf
    best_other = float(others.min())
    if loss[tuple(p_idx)] > best_other - spec.margin:
        loss[tuple(p_idx)] = best_other - spec.margin
    table = LossTable(space, loss, spec.noise_sd)
    arch, _ = table.feasible_optimum(constraint)
    if arch != planted:
        raise ValidationError("could not make the planted architecture the unique feasible optimum")
    return table


PLANTED_CHOICES = tuple(range(8, 161, 8))


def planted_benchmark(seed: int = 0, noise_sd: float = 0.001):
    """3-layer, 20-choice space (8,000 architectures) with a bottlenecked optimum.

    The limit equals the parameter count of the planted (48, 16, 48), which
    leaves about 4.5% of the space feasible.
    """
    space = SearchSpace((PLANTED_CHOICES,) * 3, input_dim=32, output_dim=1)
    spec = SyntheticSpec(space, (48, 16, 48), seed=seed, noise_sd=noise_sd)
    return synthesize(spec), spec.resolved_constraint(), spec


# -- CSV import / export -------------------------------------------------------------

def export_table(table: LossTable, path: str | Path) -> None:
    """Write ``size_1,...,size_L,loss`` rows in lexicographic index order."""
    L = table.space.num_layers
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"size_{i + 1}" for i in range(L)] + ["loss"])
        for idx in np.ndindex(*table.space.num_choices):
            w.writerow([*table.space.from_indices(idx), repr(float(table.losses[idx]))])


def import_table(path: str | Path, space: SearchSpace, noise_sd: float = 0.0) -> LossTable:
    """Parse a loss-table CSV for ``space``; every architecture must appear once."""
    L = space.num_layers
    expected = [f"size_{i + 1}" for i in range(L)] + ["loss"]
    losses = np.full(space.num_choices, np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != expected:
            raise TableError(f"header must be {','.join(expected)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != L + 1:
                raise TableError(f"expected {L + 1} fields, found {len(row)}", line=lineno)
            try:
                sizes = [int(c) for c in row[:L]]
                value = float(row[L])
            except ValueError:
                raise TableError("cannot parse row values", line=lineno) from None
            if not math.isfinite(value):
                raise TableError("loss is not finite", line=lineno)
            try:
                idx = space.to_indices(sizes)
            except ValidationError as exc:
                raise TableError(str(exc), line=lineno) from None
            if not np.isnan(losses[idx]):
                raise TableError(f"duplicate architecture {tuple(sizes)}", line=lineno)
            losses[idx] = value
    missing = int(np.isnan(losses).sum())
    if missing:
        raise TableError(f"table is incomplete: {missing} architectures missing")
    return LossTable(space, losses, noise_sd)
