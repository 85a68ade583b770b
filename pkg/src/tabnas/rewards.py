"""RL rewards: quality, resource-shaped rewards, and the rejection objective.

The rejection objective conditions the REINFORCE update on feasibility::

    J(y) = stopgrad(Q(y) - Qbar) * log[P(y) / P(V)]

where ``P(V)`` is the probability that the factorized policy samples a
feasible architecture.  ``P(V)`` is either computed exactly by enumerating
the feasible set, or estimated by importance-weighted Monte-Carlo sampling
from a proposal ``q`` (by default a frozen copy of the current policy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyFeasibleSet, NonFiniteError, ValidationError
from .policy import (
    PolicyState,
    SampleRecord,
    grad_log_prob,
    log_prob_indices,
    record_from_indices,
    sample_indices,
    weighted_mean_score,
)
from .space import ResourceConstraint, feasible_indices, param_counts_from_indices

REWARD_KINDS = ("quality", "mnasnet_soft", "mnasnet_hard", "abs", "rejection")
SHAPED_KINDS = ("mnasnet_soft", "mnasnet_hard", "abs")
PV_MODES = ("auto", "exact", "mc")
PROPOSALS = ("policy", "uniform")


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "rejection"
    beta: Optional[float] = None
    mc_samples: int = 1024
    pv_mode: str = "auto"
    proposal: str = "policy"
    allow_positive_beta: bool = False

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValidationError(f"unknown reward kind {self.kind!r}; expected one of {REWARD_KINDS}")
        if self.kind in SHAPED_KINDS:
            if self.beta is None:
                raise ValidationError(f"reward {self.kind!r} requires beta")
            if self.beta > 0 and not self.allow_positive_beta:
                raise ValidationError("beta must be <= 0 (set allow_positive_beta to override)")
        if self.pv_mode not in PV_MODES:
            raise ValidationError(f"pv_mode must be one of {PV_MODES}")
        if self.proposal not in PROPOSALS:
            raise ValidationError(f"proposal must be one of {PROPOSALS}")
        if self.kind == "rejection" and self.pv_mode != "exact" and self.mc_samples < 1:
            raise ValidationError("rejection reward needs mc_samples >= 1")


@dataclass(frozen=True)
class ValidProb:
    """P(V) (exact or estimated) together with grad log P(V).

    ``grad_log`` is ``None`` when the value is zero.
    """

    value: float
    grad_log: Optional[np.ndarray]
    exact: bool


@dataclass(frozen=True)
class MCBatch:
    space: object
    indices: np.ndarray
    policy_log_probs: np.ndarray
    proposal_log_probs: np.ndarray
    feasible_mask: np.ndarray
    estimate: float
    estimate_gradient: Optional[np.ndarray]  # grad log P_hat(V)

    @property
    def n(self) -> int:
        return len(self.indices)

    @property
    def weights(self) -> np.ndarray:
        """Importance ratios p/q for every draw (feasible or not)."""
        return np.exp(self.policy_log_probs - self.proposal_log_probs)

    def records(self, policy: PolicyState) -> list[SampleRecord]:
        return [record_from_indices(policy, row) for row in self.indices]

    def as_valid_prob(self) -> ValidProb:
        return ValidProb(self.estimate, self.estimate_gradient, exact=False)


@dataclass
class RLStepResult:
    objective_value: float
    logit_gradient: np.ndarray
    skipped: bool = False
    skip_reason: Optional[str] = None
    diagnostics: dict = field(default_factory=dict)


def quality_reward(validation_loss: float) -> float:
    if not math.isfinite(validation_loss):
        raise NonFiniteError(f"validation loss is not finite: {validation_loss}")
    return 1.0 - validation_loss


def shaped_reward(spec: RewardSpec, quality: float, cost: float, target: float) -> float:
    """Resource-aware reward combining quality with the cost ratio ``cost/target``."""
    ratio = cost / target
    if spec.kind == "mnasnet_soft":
        return quality * ratio**spec.beta
    if spec.kind == "mnasnet_hard":
        return quality * max(1.0, ratio**spec.beta)
    if spec.kind == "abs":
        return quality + spec.beta * abs(ratio - 1.0)
    raise ValidationError(f"shaped_reward does not handle kind {spec.kind!r}")


class FeasibleSet:
    """Cached choice-index rows of the feasible set, for exact P(V)."""

    def __init__(self, space, constraint: ResourceConstraint):
        self.space = space
        self.constraint = constraint
        self.indices = feasible_indices(space, constraint)
        # one-hot choice matrix: row k marks the choices made by feasible architecture k
        self.onehot = np.zeros((len(self.indices), int(space.offsets[-1])))
        if len(self.indices):
            rows = np.repeat(np.arange(len(self.indices)), space.num_layers)
            self.onehot[rows, (self.indices + space.offsets[:-1]).ravel()] = 1.0

    def __len__(self) -> int:
        return len(self.indices)


def exact_valid_prob(policy: PolicyState, constraint: ResourceConstraint,
                     feasible: Optional[FeasibleSet] = None, gradient: bool = True) -> ValidProb:
    """P(V) = sum over feasible a of P(a), and its exact logit gradient.

    The gradient of log P(V) is the feasible-conditional choice marginals
    minus the softmax; ``gradient=False`` skips it.
    """
    if feasible is None:
        feasible = FeasibleSet(policy.space, constraint)
    if len(feasible) == 0:
        raise EmptyFeasibleSet("no architecture satisfies the resource constraint")
    logp = feasible.onehot @ policy.flat_log_probs
    top = logp.max()
    if not np.isfinite(top):
        raise EmptyFeasibleSet("policy assigns zero probability to the feasible set")
    w = np.exp(logp - top)
    value = float(math.exp(top) * w.sum())
    if value <= 0.0:
        raise EmptyFeasibleSet("policy assigns zero probability to the feasible set")
    grad = (w @ feasible.onehot) / w.sum() - policy.flat_probs if gradient else None
    return ValidProb(min(value, 1.0), grad, exact=True)


def mc_estimate_valid_prob(policy: PolicyState, constraint: ResourceConstraint, n: int,
                           rng: np.random.Generator,
                           proposal: Optional[PolicyState] = None) -> MCBatch:
    """Importance-sampling estimate of P(V) from ``n`` proposal draws.

    ``proposal`` defaults to the current policy itself, in which case every
    ratio is 1 and the estimate is the feasible fraction of the batch.
    """
    if n < 1:
        raise ValidationError("need at least one Monte-Carlo sample")
    q = policy if proposal is None else proposal
    idx = sample_indices(q, rng, n)
    logp = log_prob_indices(policy, idx)
    logq = logp if proposal is None else log_prob_indices(q, idx)
    feas = param_counts_from_indices(policy.space, idx) <= constraint.limit
    w = np.where(feas, np.exp(logp - logq), 0.0)
    estimate = float(w.sum() / n)
    grad = None
    if estimate > 0:
        grad = weighted_mean_score(policy, idx[feas], w[feas])
    return MCBatch(policy.space, idx, logp, logq, feas, estimate, grad)


def reinforce_objective(policy: PolicyState, y: SampleRecord, reward: float,
                        baseline: float) -> RLStepResult:
    """Plain REINFORCE: J = stopgrad(r - Qbar) * log P(y)."""
    adv = reward - baseline
    return RLStepResult(
        objective_value=adv * y.log_prob,
        logit_gradient=adv * grad_log_prob(policy, y),
    )


def rejection_objective(policy: PolicyState, y: SampleRecord, quality: float, baseline: float,
                        pv: ValidProb | MCBatch, feasible: bool) -> RLStepResult:
    """REINFORCE on P(y | y in V); infeasible ``y`` or zero P(V) skip the step."""
    zeros = np.zeros_like(policy.logits)
    if isinstance(pv, MCBatch):
        pv = pv.as_valid_prob()
    if not feasible:
        return RLStepResult(0.0, zeros, skipped=True, skip_reason="infeasible_sample")
    if pv.value <= 0.0 or pv.grad_log is None:
        return RLStepResult(0.0, zeros, skipped=True, skip_reason="zero_pv_estimate")
    adv = quality - baseline
    grad = adv * (grad_log_prob(policy, y) - pv.grad_log)
    return RLStepResult(
        objective_value=adv * (y.log_prob - math.log(pv.value)),
        logit_gradient=grad,
    )
