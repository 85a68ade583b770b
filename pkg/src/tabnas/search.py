"""Search loop: alternating weight and controller updates, and final selection.

Per step the loop (1) updates the shared weights on one policy sample ``x``
(SuperNet evaluation only) and (2) after warmup, draws ``R`` independent
samples ``y``, scores them and takes one Adam step on the logits.  Under
oracle evaluation step (1) is skipped entirely and ``Q = 1 - table loss``.

Every random draw comes from one generator seeded by ``config.seed``.  The
draw order is:

* SuperNet initialization, once at the start (SuperNet mode);
* per epoch, a permutation of the training rows (SuperNet mode);
* per step, weight phase: the warmup coin (only during warmup) and then,
  unless the coin chose the full SuperNet, one policy sample;
* per step, controller phase (after warmup): the ``R`` samples ``y``; the
  validation minibatch rows (SuperNet mode, ``rl_eval="minibatch"``); one
  noise draw per evaluated sample (noisy oracle); the Monte-Carlo batch
  (rejection reward in MC mode, only if some ``y`` is feasible).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import ConfigError, NonFiniteError, SelectionFailed, TabNASError
from .oracle import LossTable, evaluate
from .policy import (
    BaselineState,
    PolicyState,
    SampleRecord,
    adam_step,
    baseline_update,
    log_prob_indices,
    probabilities,
    record_from_indices,
    sample_indices,
)
from .rewards import (
    FeasibleSet,
    RewardSpec,
    RLStepResult,
    exact_valid_prob,
    mc_estimate_valid_prob,
    quality_reward,
    rejection_objective,
    reinforce_objective,
    shaped_reward,
    SHAPED_KINDS,
)
from .space import (
    ENUMERATION_LIMIT,
    Architecture,
    ResourceConstraint,
    SearchSpace,
    param_count,
    param_count_grid,
    param_counts_from_indices,
)
from .supernet import (
    SuperNet,
    TrainHyper,
    WarmupSchedule,
    child_forward,
    weight_step,
)

EVALUATIONS = ("oracle", "supernet")
RL_EVALS = ("minibatch", "full")
BASELINE_TARGETS = ("quality", "reward")


@dataclass(frozen=True)
class SelectionConfig:
    m: int = 500
    n: int = 3
    determinism_threshold: float = 0.9

    def __post_init__(self):
        if not self.m >= self.n >= 1:
            raise ConfigError("selection needs m >= n >= 1", field="selection")
        if not 0.0 < self.determinism_threshold <= 1.0:
            raise ConfigError("determinism_threshold must lie in (0, 1]", field="determinism_threshold")


@dataclass(frozen=True)
class SearchConfig:
    space: SearchSpace
    constraint: ResourceConstraint
    reward: RewardSpec = RewardSpec()
    rl_learning_rate: float = 0.1
    epochs: int = 20
    steps_per_epoch: int = 100  # oracle mode only; SuperNet mode uses ceil(n_train / batch_size)
    warmup: WarmupSchedule = WarmupSchedule()
    train_hyper: TrainHyper = TrainHyper()
    evaluation: str = "oracle"
    table: Optional[LossTable] = None
    dataset: Optional[Dataset] = None
    replicas: int = 1
    skip_infeasible_weight_updates: bool = False
    seed: int = 0
    selection: SelectionConfig = SelectionConfig()
    baseline_decay: float = 0.9
    baseline_tracks: str = "quality"
    rl_eval: str = "minibatch"
    max_failures: int = 10
    log_probabilities: bool = True

    def __post_init__(self):
        if not self.rl_learning_rate > 0:
            raise ConfigError("rl_learning_rate must be positive", field="rl_learning_rate")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1", field="epochs")
        if self.warmup.fraction > 0 and self.epochs < 4:
            raise ConfigError("warmup needs at least 4 epochs", field="epochs")
        if self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be >= 1", field="steps_per_epoch")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1", field="replicas")
        if self.evaluation not in EVALUATIONS:
            raise ConfigError(f"evaluation must be one of {EVALUATIONS}", field="evaluation")
        if self.evaluation == "oracle":
            if self.table is None:
                raise ConfigError("oracle evaluation needs a loss table", field="table")
            if self.table.space != self.space:
                raise ConfigError("loss table space differs from the search space", field="table")
        else:
            if self.dataset is None:
                raise ConfigError("SuperNet evaluation needs a dataset", field="dataset")
            if (self.dataset.num_features, self.dataset.output_dim) != (self.space.input_dim,
                                                                         self.space.output_dim):
                raise ConfigError("dataset dimensions do not match input_dim/output_dim", field="dataset")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ConfigError("baseline_decay must lie in [0, 1)", field="baseline_decay")
        if self.baseline_tracks not in BASELINE_TARGETS:
            raise ConfigError(f"baseline_tracks must be one of {BASELINE_TARGETS}", field="baseline_tracks")
        if self.rl_eval not in RL_EVALS:
            raise ConfigError(f"rl_eval must be one of {RL_EVALS}", field="rl_eval")
        if self.max_failures < 0:
            raise ConfigError("max_failures must be >= 0", field="max_failures")

    @property
    def uses_exact_pv(self) -> bool:
        mode = self.reward.pv_mode
        return mode == "exact" or (mode == "auto" and self.space.size <= ENUMERATION_LIMIT)


class SearchAborted(TabNASError):
    """More steps failed than the configured cap allows."""


@dataclass
class RunLog:
    """Append-only per-step records plus a footer; serialized as JSON lines."""

    records: list = field(default_factory=list)
    footer: dict = field(default_factory=dict)
    header: dict = field(default_factory=dict)

    def append(self, record: dict) -> None:
        if self.records and record["step"] <= self.records[-1]["step"]:
            raise ValueError("run log steps must be strictly increasing")
        self.records.append(record)

    def lines(self, timing: bool = True) -> list[str]:
        footer = dict(self.footer)
        if not timing:
            footer.pop("wall_time_s", None)
        out = [json.dumps({"type": "header", **self.header}, sort_keys=True)]
        out += [json.dumps({"type": "step", **r}, sort_keys=True) for r in self.records]
        out.append(json.dumps({"type": "footer", **footer}, sort_keys=True))
        return out

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.lines()) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        log = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                log.header = rec
            elif kind == "footer":
                log.footer = rec
            else:
                log.records.append(rec)
        return log


# -- controller step ---------------------------------------------------------

def _reward_value(spec: RewardSpec, quality: float, cost: int, constraint: ResourceConstraint) -> float:
    if spec.kind in SHAPED_KINDS:
        return shaped_reward(spec, quality, cost, constraint.limit)
    return quality


def replica_rl_step(policy: PolicyState, reward: RewardSpec, constraint: ResourceConstraint,
                    records: Sequence[SampleRecord], qualities: Sequence[Optional[float]],
                    baseline: float, pv=None, costs: Optional[Sequence[int]] = None) -> RLStepResult:
    """Average the per-sample updates of ``R`` independent samples.

    Samples that skip (infeasible under the rejection reward) contribute
    zero; the mean is then rescaled by ``R / #contributing``, which equals
    the mean over contributing samples.  With no contributing sample the
    whole step is skipped.
    """
    R = len(records)
    if R < 1 or len(qualities) != R:
        raise ValueError("need one quality entry per sample and at least one sample")
    results = []
    if costs is None:
        costs = [param_count(rec.arch, policy.space) for rec in records]
    for rec, q, cost in zip(records, qualities, costs):
        feasible = constraint.is_feasible(cost)
        if reward.kind == "rejection":
            if not feasible or q is None:
                res = RLStepResult(0.0, np.zeros_like(policy.logits), True, "infeasible_sample")
            else:
                res = rejection_objective(policy, rec, q, baseline, pv, feasible=True)
        else:
            res = reinforce_objective(policy, rec, _reward_value(reward, q, cost, constraint), baseline)
        results.append(res)
    live = [r for r in results if not r.skipped]
    diag = {"n_contributing": len(live), "rescale": (R / len(live)) if live else 0.0,
            "skip_reasons": [r.skip_reason for r in results]}
    if not live:
        reason = "zero_pv_estimate" if "zero_pv_estimate" in diag["skip_reasons"] else "infeasible_sample"
        return RLStepResult(0.0, np.zeros_like(policy.logits), True, reason, diag)
    scale = R / len(live)
    grad = sum(r.logit_gradient for r in results) / R * scale  # zero-filled mean, then rescaled
    value = sum(r.objective_value for r in results) / R * scale
    return RLStepResult(float(value), grad, False, None, diag)


# -- final selection ------------------------------------------------------------

def select_final(policy: PolicyState, constraint: ResourceConstraint, selection: SelectionConfig,
                 rng: np.random.Generator) -> list[Architecture]:
    """Return up to ``n`` feasible architectures.

    A near-deterministic policy (every layer's top probability at least the
    threshold) returns its argmax when that is feasible.  Otherwise ``m``
    samples are drawn and the ``n`` unique feasible ones with the most
    parameters are kept, ties broken by higher sampling probability and
    then lexicographically.
    """
    space = policy.space
    rows = probabilities(policy)
    if all(p.max() >= selection.determinism_threshold for p in rows):
        arch = space.from_indices([int(np.argmax(p)) for p in rows])
        if constraint.is_feasible(param_count(arch, space)):
            return [arch]
    idx = sample_indices(policy, rng, selection.m)
    idx = idx[param_counts_from_indices(space, idx) <= constraint.limit]
    if len(idx) == 0:
        raise SelectionFailed(f"no feasible architecture among {selection.m} samples")
    idx = np.unique(idx, axis=0)
    costs = param_counts_from_indices(space, idx)
    logp = log_prob_indices(policy, idx)
    order = sorted(range(len(idx)), key=lambda k: (-int(costs[k]), -float(logp[k]), tuple(idx[k])))
    return [space.from_indices(idx[k]) for k in order[: selection.n]]


# -- the search loop --------------------------------------------------------------

class _Evaluator:
    """Quality of controller samples under oracle or SuperNet evaluation."""

    def __init__(self, config: SearchConfig, net: Optional[SuperNet]):
        self.config = config
        self.net = net

    def qualities(self, archs: Sequence[Optional[Architecture]], rng) -> list[Optional[float]]:
        cfg = self.config
        if cfg.evaluation == "oracle":
            return [None if a is None else quality_reward(evaluate(cfg.table, a, rng)) for a in archs]
        Xv, yv = cfg.dataset.validation
        if cfg.rl_eval == "minibatch":
            k = min(cfg.train_hyper.batch_size, len(yv))
            rows = rng.choice(len(yv), size=k, replace=False)
            Xv, yv = Xv[rows], yv[rows]
        out = []
        for a in archs:
            if a is None:
                out.append(None)
                continue
            losses, _ = child_forward(self.net, a, Xv, yv)
            out.append(quality_reward(float(losses.mean())))
        return out


class _ExactPV:
    """Exact P(V) with its gradient, memoized for the latest policy state.

    The value logged at the end of one step is the pre-update value needed
    by the next controller step, so each state is enumerated once.
    """

    def __init__(self, space: SearchSpace, constraint: ResourceConstraint):
        self.constraint = constraint
        self.feasible = FeasibleSet(space, constraint) if space.size <= ENUMERATION_LIMIT else None
        self._last = (None, None)
        self.costs = param_count_grid(space) if space.size <= ENUMERATION_LIMIT else None

    def param_counts(self, space: SearchSpace, idx: np.ndarray) -> list[int]:
        if self.costs is None:
            return param_counts_from_indices(space, idx).tolist()
        return self.costs[tuple(idx.T)].tolist()

    @property
    def available(self) -> bool:
        return self.feasible is not None and len(self.feasible) > 0

    def __call__(self, policy: PolicyState):
        if not self.available:
            return None
        if self._last[0] is not policy:
            self._last = (policy, exact_valid_prob(policy, self.constraint, self.feasible))
        return self._last[1]


def run_search(config: SearchConfig) -> tuple[PolicyState, RunLog]:
    """Run warmup and search; returns the final policy and the run log."""
    start = time.perf_counter()
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    space, constraint = cfg.space, cfg.constraint
    policy = PolicyState.initial(space, cfg.rl_learning_rate)
    baseline = BaselineState(decay=cfg.baseline_decay)
    exact = _ExactPV(space, constraint)
    exact_mode = cfg.uses_exact_pv and cfg.reward.kind == "rejection"
    if exact_mode and not exact.available:
        raise ConfigError("exact P(V) requested but the feasible set is empty or too large", field="pv_mode")

    net = None
    if cfg.evaluation == "supernet":
        net = SuperNet(space, layer_norm=cfg.train_hyper.layer_norm, rng=rng)
        n_train = len(cfg.dataset.train_indices)
        steps_per_epoch = max(1, math.ceil(n_train / cfg.train_hyper.batch_size))
    else:
        steps_per_epoch = cfg.steps_per_epoch
    total = cfg.epochs * steps_per_epoch
    ctl = _Controller(cfg, _Evaluator(cfg, net), exact, exact_mode)

    log = RunLog(header={
        "seed": cfg.seed, "reward": cfg.reward.kind, "evaluation": cfg.evaluation,
        "total_steps": total, "steps_per_epoch": steps_per_epoch, "exact_pv": exact_mode,
        "space": space.to_dict(), "param_limit": _limit_json(constraint.limit),
    })
    skips = ctl.skips
    failures = 0
    train = cfg.dataset.train if net is not None else None
    bs = cfg.train_hyper.batch_size

    def finish(rec):
        pv = exact(policy)
        rec["pv_exact"] = None if pv is None else pv.value
        rec["skips"] = dict(skips)
        if cfg.log_probabilities:
            rec["probs"] = [p.tolist() for p in probabilities(policy)]
        log.append(rec)

    step = 0
    for epoch in range(cfg.epochs):
        if net is not None:
            order = rng.permutation(len(train[1]))
        for k in range(steps_per_epoch):
            progress = step / total
            warm = progress < cfg.warmup.fraction
            rec: dict = {"step": step, "phase": "warmup" if warm else "search", "weight_arch": None}
            try:
                if net is not None:
                    rows = order[k * bs:(k + 1) * bs]
                    _, wrec = weight_step(net, policy, cfg.train_hyper, cfg.warmup, progress,
                                          (train[0][rows], train[1][rows]), rng,
                                          skip_infeasible=cfg.skip_infeasible_weight_updates,
                                          constraint=constraint)
                    rec.update(weight_arch=list(wrec.arch), full_supernet=wrec.full_supernet,
                               weight_loss=wrec.loss, weight_skipped=wrec.skipped)
                    if wrec.error:
                        raise NonFiniteError(wrec.error)
                    if wrec.skipped:
                        skips["weight_skipped"] += 1
                if not warm:
                    policy, baseline = ctl.step(policy, baseline, rng, rec)
            except NonFiniteError as exc:
                failures += 1
                skips["failed"] += 1
                rec["error"] = str(exc)
                if failures > cfg.max_failures:
                    finish(rec)
                    raise SearchAborted(f"{failures} failed steps exceed max_failures={cfg.max_failures}") from exc
            finish(rec)
            step += 1

    footer = {"final_most_probable": list(_most_probable(policy)), "skips": dict(skips),
              "final_probabilities": [p.tolist() for p in probabilities(policy)]}
    try:
        footer["selected"] = [list(a) for a in select_final(policy, constraint, cfg.selection, rng)]
        footer["selection_failed"] = False
    except SelectionFailed:
        footer["selected"] = []
        footer["selection_failed"] = True
    footer["wall_time_s"] = time.perf_counter() - start
    log.footer = footer
    return policy, log


def _limit_json(limit):
    return None if limit == math.inf else int(limit)


def _most_probable(policy: PolicyState) -> Architecture:
    return policy.space.from_indices([int(np.argmax(p)) for p in probabilities(policy)])


class _Controller:
    """One controller update per call, with the run's skip counters."""

    def __init__(self, cfg: SearchConfig, evaluator: _Evaluator, exact: _ExactPV, exact_mode: bool):
        self.cfg = cfg
        self.evaluator = evaluator
        self.exact = exact
        self.exact_mode = exact_mode
        self.proposal = PolicyState.initial(cfg.space) if cfg.reward.proposal == "uniform" else None
        self.skips = {"infeasible_sample": 0, "zero_pv_estimate": 0, "weight_skipped": 0, "failed": 0}

    def step(self, policy: PolicyState, baseline: BaselineState, rng, rec: dict):
        cfg = self.cfg
        constraint = cfg.constraint
        idx = sample_indices(policy, rng, cfg.replicas)
        records = [record_from_indices(policy, row) for row in idx]
        costs = self.exact.param_counts(cfg.space, idx)
        feas = [c <= constraint.limit for c in costs]
        rejection = cfg.reward.kind == "rejection"
        to_eval = [r.arch if (f or not rejection) else None for r, f in zip(records, feas)]
        qualities = self.evaluator.qualities(to_eval, rng)
        rec.update(rl_archs=[list(r.arch) for r in records], feasible=feas, Q=qualities)

        pv = None
        if rejection and any(feas):
            if self.exact_mode:
                pv = self.exact(policy)
            else:
                pv = mc_estimate_valid_prob(policy, constraint, cfg.reward.mc_samples, rng, self.proposal)
                rec["pv_estimate"] = pv.estimate
        if rejection:
            rewards = qualities
        else:
            rewards = [_reward_value(cfg.reward, q, c, constraint) for q, c in zip(qualities, costs)]
        rec["r"] = rewards

        result = replica_rl_step(policy, cfg.reward, constraint, records, qualities, baseline.value, pv,
                                 costs=costs)
        rec.update(J=result.objective_value, skipped=result.skipped, skip_reason=result.skip_reason,
                   baseline=baseline.value)
        if result.skipped:
            self.skips[result.skip_reason] += 1
            return policy, baseline
        policy = adam_step(policy, result.logit_gradient)
        tracked = rewards if cfg.baseline_tracks == "reward" else qualities
        live = [t for t, reason in zip(tracked, result.diagnostics["skip_reasons"]) if reason is None]
        return policy, baseline_update(baseline, sum(live) / len(live))
