"""Controller-versus-baseline comparisons on a loss table.

Each method reports the noise-free table loss of its current pick after a
given number of evaluations: for the controller, the most probable feasible
architecture under the logged policy; for the baselines, the best
architecture seen so far.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from .baselines import evolutionary_search, random_search
from .oracle import LossTable, evaluate
from .policy import PolicyState, log_prob_indices
from .rewards import RewardSpec
from .search import SearchConfig, run_search
from .space import feasible_indices


def most_probable_feasible(probs: Sequence[Sequence[float]], space, feasible: np.ndarray):
    """Joint-mode feasible architecture of a factorized policy given per-layer probabilities."""
    logits = np.log(np.clip(np.concatenate([np.asarray(p, dtype=float) for p in probs]), 1e-300, None))
    policy = PolicyState.initial(space).with_logits(logits)
    return space.from_indices(feasible[int(np.argmax(log_prob_indices(policy, feasible)))])


def _checkpoints(total: int, points: int) -> list[int]:
    return sorted({max(1, int(round(total * (k + 1) / points))) for k in range(points)})


def controller_curve(config: SearchConfig, points: int = 10) -> list[tuple[int, float]]:
    """(controller evaluations, table loss of the most probable feasible arch) pairs."""
    config = replace(config, log_probabilities=True)
    _, log = run_search(config)
    table: LossTable = config.table
    feasible = feasible_indices(config.space, config.constraint)
    search = [r for r in log.records if r["phase"] == "search"]
    out = []
    for b in _checkpoints(len(search), points) if search else []:
        arch = most_probable_feasible(search[b - 1]["probs"], config.space, feasible)
        out.append((b * config.replicas, table.loss(arch)))
    return out


def baseline_curve(method: str, config: SearchConfig, budget: int, points: int = 10,
                   population: int = 20, top_k: int = 5) -> list[tuple[int, float]]:
    rng = np.random.default_rng(config.seed)
    table = config.table

    def ev(arch):
        return evaluate(table, arch, rng)

    if method == "random":
        res = random_search(config.space, config.constraint, ev, budget, rng)
    elif method == "evolution":
        generations = max(0, budget // population - 1)
        res = evolutionary_search(config.space, config.constraint, ev, population, top_k, generations, rng)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    # best-so-far by observed (possibly noisy) loss, reported at its table loss
    picks, best, best_arch = [], np.inf, None
    for arch, loss in res.evaluated:
        if loss < best:
            best, best_arch = loss, arch
        picks.append(table.loss(best_arch))
    return [(b, picks[b - 1]) for b in _checkpoints(len(picks), points)]


def compare_job(job: tuple) -> list[tuple]:
    """Run one (method, seed) job; returns rows (method, seed, budget, loss)."""
    method, config, points, budget = job
    if method.startswith("evolution") or method == "random":
        curve = baseline_curve(method, config, budget, points)
    else:
        curve = controller_curve(config, points)
    return [(method, config.seed, b, loss) for b, loss in curve]


def compare_jobs(config: SearchConfig, seeds: Sequence[int], betas: Sequence[float],
                 points: int = 10) -> list[tuple]:
    """The job list behind a comparison: rejection, abs per beta, random, evolution."""
    total = config.epochs * config.steps_per_epoch
    search_steps = total - math.ceil(config.warmup.fraction * total)  # steps with t/total < fraction warm up
    budget = max(1, search_steps * config.replicas)
    jobs = []
    for s in seeds:
        base = replace(config, seed=s)
        jobs.append(("rejection", replace(base, reward=replace(config.reward, kind="rejection", beta=None)),
                     points, budget))
        for beta in betas:
            jobs.append((f"abs_beta{beta:g}", replace(base, reward=RewardSpec("abs", beta=beta)), points, budget))
        jobs.append(("random", base, points, budget))
        jobs.append(("evolution", base, points, budget))
    return jobs
