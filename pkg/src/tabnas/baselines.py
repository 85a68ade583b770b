"""Black-box search baselines: random search and a simple evolutionary search.

Both draw their candidates uniformly from the feasible set by rejection and
report a best-so-far curve indexed by the number of evaluations, so they can
be compared against the controller on a loss-versus-budget plot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import EmptyFeasibleSet, ValidationError
from .space import (
    ENUMERATION_LIMIT,
    Architecture,
    ResourceConstraint,
    SearchSpace,
    feasible_mask,
    param_counts_from_indices,
)

Evaluator = Callable[[Architecture], float]


@dataclass
class BaselineResult:
    best_arch: Architecture
    best_loss: float
    curve: list = field(default_factory=list)  # best-so-far loss after each evaluation
    evaluated: list = field(default_factory=list)  # (arch, loss) in evaluation order

    def record(self, arch: Architecture, loss: float) -> None:
        self.evaluated.append((arch, loss))
        if loss < self.best_loss:
            self.best_arch, self.best_loss = arch, loss
        self.curve.append(self.best_loss)


def _feasible(space: SearchSpace, constraint: ResourceConstraint, idx) -> bool:
    return bool(param_counts_from_indices(space, np.asarray(idx))[0] <= constraint.limit)


def sample_feasible_uniform(space: SearchSpace, constraint: ResourceConstraint,
                            rng: np.random.Generator, max_tries: int = 100_000) -> tuple[int, ...]:
    """Choice indices of one architecture drawn uniformly from the feasible set."""
    for _ in range(max_tries):
        idx = tuple(int(rng.integers(c)) for c in space.num_choices)
        if _feasible(space, constraint, idx):
            return idx
    raise EmptyFeasibleSet(f"no feasible architecture found in {max_tries} uniform draws")


def random_search(space: SearchSpace, constraint: ResourceConstraint, evaluator: Evaluator,
                  budget: int, rng: np.random.Generator, distinct: bool = False,
                  max_tries: int = 100_000) -> BaselineResult:
    """Evaluate ``budget`` uniform feasible architectures, tracking the best.

    With ``distinct`` no architecture is evaluated twice and the search stops
    early once every feasible architecture has been seen.
    """
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    result = BaselineResult(best_arch=(), best_loss=np.inf)
    seen: set = set()
    n_feasible = None
    if distinct and space.size <= ENUMERATION_LIMIT:
        n_feasible = int(feasible_mask(space, constraint).sum())
    for _ in range(budget):
        if n_feasible is not None and len(seen) == n_feasible:
            break
        for _ in range(max_tries):
            idx = sample_feasible_uniform(space, constraint, rng, max_tries)
            if not distinct or idx not in seen:
                break
        else:
            break  # feasible set exhausted (or too small to hit a new point)
        seen.add(idx)
        arch = space.from_indices(idx)
        result.record(arch, float(evaluator(arch)))
    return result


def _retry(make, space, constraint, cap: int, what: str):
    for _ in range(cap):
        idx = make()
        if _feasible(space, constraint, idx):
            return idx
    raise EmptyFeasibleSet(f"could not produce a feasible {what} in {cap} attempts")


def evolutionary_search(space: SearchSpace, constraint: ResourceConstraint, evaluator: Evaluator,
                        population: int, top_k: int, generations: int, rng: np.random.Generator,
                        retry_cap: int = 100) -> BaselineResult:
    """Truncation-selection evolution without elitism.

    Each generation keeps the ``top_k`` lowest-loss members as parents and
    builds the next population from ``population/2`` uniform per-layer
    crossovers of two random parents plus ``population/2`` single-layer
    mutations of a random parent.  Infeasible children are redrawn up to
    ``retry_cap`` times each.
    """
    if population < 2 or population % 2:
        raise ValidationError("population must be a positive even number")
    if not 1 <= top_k <= population:
        raise ValidationError("top_k must lie in [1, population]")
    if generations < 0:
        raise ValidationError("generations must be >= 0")
    L = space.num_layers
    result = BaselineResult(best_arch=(), best_loss=np.inf)

    members = [sample_feasible_uniform(space, constraint, rng, retry_cap * population)
               for _ in range(population)]
    for gen in range(generations + 1):
        losses = []
        for idx in members:
            arch = space.from_indices(idx)
            loss = float(evaluator(arch))
            losses.append(loss)
            result.record(arch, loss)
        if gen == generations:
            break
        order = sorted(range(population), key=lambda k: (losses[k], members[k]))
        parents = [members[k] for k in order[:top_k]]

        def crossover():
            a, b = rng.choice(top_k, size=2, replace=top_k < 2)
            pick = rng.random(L) < 0.5
            return tuple(parents[a][i] if pick[i] else parents[b][i] for i in range(L))

        def mutate():
            child = list(parents[int(rng.integers(top_k))])
            i = int(rng.integers(L))
            c = space.num_choices[i]
            if c > 1:  # a different choice for that layer
                j = int(rng.integers(c - 1))
                child[i] = j if j < child[i] else j + 1
            return tuple(child)

        half = population // 2
        members = ([_retry(crossover, space, constraint, retry_cap, "crossover child") for _ in range(half)]
                   + [_retry(mutate, space, constraint, retry_cap, "mutant") for _ in range(half)])
    return result
