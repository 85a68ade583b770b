import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabnas.errors import EmptyFeasibleSet, NonFiniteError, ValidationError
from tabnas.policy import PolicyState, grad_log_prob, record_from_indices, sample
from tabnas.rewards import (
    FeasibleSet,
    RewardSpec,
    exact_valid_prob,
    mc_estimate_valid_prob,
    quality_reward,
    rejection_objective,
    reinforce_objective,
    shaped_reward,
)
from tabnas.space import UNBOUNDED, ResourceConstraint

from conftest import median_limit, small_space
from oracles import brute_pv, fd_grad


class TestQuality:
    def test_values(self):
        assert quality_reward(1.0) == 0.0
        assert quality_reward(0.4454) == pytest.approx(0.5546, abs=1e-15)
        assert quality_reward(-0.2) == pytest.approx(1.2)

    def test_non_finite(self):
        with pytest.raises(NonFiniteError):
            quality_reward(float("nan"))


class TestShaped:
    @pytest.mark.parametrize("kind", ["mnasnet_soft", "mnasnet_hard", "abs"])
    def test_ratio_one(self, kind):
        assert shaped_reward(RewardSpec(kind, beta=-0.7), 0.63, 40, 40) == pytest.approx(0.63)

    def test_abs_example(self):
        assert shaped_reward(RewardSpec("abs", beta=-1.0), 0.8, 50, 40) == pytest.approx(0.55)

    def test_soft_example(self):
        assert shaped_reward(RewardSpec("mnasnet_soft", beta=-1.0), 1.0, 80, 40) == pytest.approx(0.5)

    def test_kind_mismatch(self):
        with pytest.raises(ValidationError):
            shaped_reward(RewardSpec("quality"), 0.5, 10, 10)

    def test_beta_rules(self):
        with pytest.raises(ValidationError):
            RewardSpec("abs")
        with pytest.raises(ValidationError):
            RewardSpec("abs", beta=0.5)
        assert RewardSpec("abs", beta=0.5, allow_positive_beta=True).beta == 0.5
        with pytest.raises(ValidationError):
            RewardSpec("mystery")

    @pytest.mark.parametrize("beta", [-0.1, -1.0, -3.0])
    def test_ordering_over_cost(self, beta):
        T0 = 100
        T = np.arange(1, 301)
        q = 0.7
        ab = [shaped_reward(RewardSpec("abs", beta=beta), q, t, T0) for t in T]
        soft = [shaped_reward(RewardSpec("mnasnet_soft", beta=beta), q, t, T0) for t in T]
        hard = [shaped_reward(RewardSpec("mnasnet_hard", beta=beta), q, t, T0) for t in T]
        assert T[int(np.argmax(ab))] == T0
        # the soft reward only falls once the cost exceeds the target
        assert max(soft[T0:]) < soft[T0 - 1] <= max(soft[:T0])
        # max{1, ratio^beta} with beta < 0 is flat at q from the target upward
        assert np.all(np.array(hard[T0 - 1:]) == q)
        np.testing.assert_allclose(hard[:T0], [q * (t / T0) ** beta for t in T[:T0]])


class TestExactValidProb:
    def test_toy_uniform(self, toy):
        table, con = toy
        pv = exact_valid_prob(PolicyState.initial(table.space), con)
        assert pv.value == pytest.approx(2 / 3, abs=1e-15)
        assert len(FeasibleSet(table.space, con)) == 6

    def test_everything_feasible(self, rng, toy_space):
        pol = PolicyState.initial(toy_space).with_logits(rng.normal(size=6))
        pv = exact_valid_prob(pol, ResourceConstraint(UNBOUNDED))
        assert pv.value == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(pv.grad_log, 0.0, atol=1e-14)

    def test_deterministic_on_feasible(self, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([50, 0, 0, 50, 0, 0])
        assert exact_valid_prob(pol, con).value == pytest.approx(1.0, abs=1e-12)

    def test_empty_feasible_set(self, toy_space):
        with pytest.raises(EmptyFeasibleSet):
            exact_valid_prob(PolicyState.initial(toy_space), ResourceConstraint(0))

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_enumeration_and_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        sp = small_space(rng)
        con = median_limit(sp)
        pol = PolicyState.initial(sp).with_logits(rng.normal(scale=1.5, size=int(sp.offsets[-1])))
        pv = exact_valid_prob(pol, con)
        assert pv.value == pytest.approx(brute_pv(pol, con), rel=1e-12)
        fd = fd_grad(lambda z: math.log(brute_pv(pol.with_logits(z), con)), pol.logits.copy())
        np.testing.assert_allclose(pv.grad_log, fd, rtol=1e-6, atol=1e-8)


class TestMonteCarlo:
    def test_all_feasible(self, rng, toy_space):
        batch = mc_estimate_valid_prob(PolicyState.initial(toy_space), ResourceConstraint(UNBOUNDED), 50, rng)
        assert batch.estimate == 1.0

    def test_feasible_fraction_band(self, rng, toy):
        table, con = toy
        batch = mc_estimate_valid_prob(PolicyState.initial(table.space), con, 10_000, rng)
        assert abs(batch.estimate - 2 / 3) <= 4 * math.sqrt((2 / 3) * (1 / 3) / 10_000)
        assert batch.estimate == batch.feasible_mask.mean()
        np.testing.assert_allclose(batch.weights, 1.0)

    def test_degenerate_policy(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([60, 0, 0, 60, 0, 0])
        batch = mc_estimate_valid_prob(pol, con, 32, rng)
        y = record_from_indices(pol, (0, 0))
        np.testing.assert_allclose(batch.estimate_gradient, grad_log_prob(pol, y), atol=1e-12)

    def test_zero_estimate(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([0, 0, 60, 0, 0, 60])  # mass on (4,4)
        batch = mc_estimate_valid_prob(pol, con, 16, rng)
        assert batch.estimate == 0.0 and batch.estimate_gradient is None

    def test_needs_samples(self, rng, toy):
        with pytest.raises(ValidationError):
            mc_estimate_valid_prob(PolicyState.initial(toy[0].space), toy[1], 0, rng)

    def test_uniform_proposal_is_unbiased(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([1.0, 0.0, -1.0, 0.5, 0.0, 0.2])
        q = PolicyState.initial(table.space)
        est = [mc_estimate_valid_prob(pol, con, 64, rng, proposal=q).estimate for _ in range(3000)]
        exact = exact_valid_prob(pol, con).value
        assert abs(np.mean(est) - exact) <= 4 * np.std(est) / math.sqrt(len(est))

    def test_estimate_bounded_by_max_ratio(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([2.0, 0.0, -1.0, 0.5, 0.0, 0.2])
        q = PolicyState.initial(table.space)
        for _ in range(50):
            b = mc_estimate_valid_prob(pol, con, 8, rng, proposal=q)
            assert 0.0 <= b.estimate <= b.weights.max() + 1e-12


class TestRejectionObjective:
    def test_zero_advantage(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits(rng.normal(size=6))
        y = record_from_indices(pol, (2, 0))
        res = rejection_objective(pol, y, 0.3, 0.3, exact_valid_prob(pol, con), feasible=True)
        assert not res.skipped
        np.testing.assert_array_equal(res.logit_gradient, 0.0)

    def test_infeasible_skips(self, toy):
        table, con = toy
        pol = PolicyState.initial(table.space)
        y = record_from_indices(pol, (2, 2))
        res = rejection_objective(pol, y, 0.9, 0.1, exact_valid_prob(pol, con), feasible=False)
        assert res.skipped and res.skip_reason == "infeasible_sample"
        np.testing.assert_array_equal(res.logit_gradient, 0.0)

    def test_zero_pv_skips(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([0, 0, 60, 0, 0, 60])
        batch = mc_estimate_valid_prob(pol, con, 8, rng)
        res = rejection_objective(pol, record_from_indices(pol, (2, 0)), 0.9, 0.1, batch, feasible=True)
        assert res.skipped and res.skip_reason == "zero_pv_estimate"
        np.testing.assert_array_equal(res.logit_gradient, 0.0)

    def test_toy_gradient_against_finite_differences(self, toy):
        table, con = toy
        pol = PolicyState.initial(table.space)
        y = record_from_indices(pol, (2, 0))  # (4,2)
        pv = exact_valid_prob(pol, con)
        res = rejection_objective(pol, y, 1.5, 0.5, pv, feasible=True)
        assert res.objective_value == pytest.approx(math.log((1 / 9) / (2 / 3)), rel=1e-12)

        def f(z):
            p = pol.with_logits(z)
            return record_from_indices(p, (2, 0)).log_prob - math.log(brute_pv(p, con))

        np.testing.assert_allclose(res.logit_gradient, fd_grad(f, pol.logits.copy()), rtol=1e-6, atol=1e-9)

    def test_full_support_correction_is_mean_score(self, rng, toy_space):
        # with every draw feasible the correction is the batch-mean score, which averages to zero
        pol = PolicyState.initial(toy_space).with_logits(rng.normal(size=6))
        con = ResourceConstraint(UNBOUNDED)
        batch = mc_estimate_valid_prob(pol, con, 256, rng)
        y = sample(pol, rng)
        res = rejection_objective(pol, y, 0.8, 0.3, batch, feasible=True)
        plain = reinforce_objective(pol, y, 0.8, 0.3).logit_gradient
        mean_score = np.mean([grad_log_prob(pol, r) for r in batch.records(pol)], axis=0)
        np.testing.assert_allclose(res.logit_gradient, plain - 0.5 * mean_score, atol=1e-12)
        exact = exact_valid_prob(pol, con)
        np.testing.assert_allclose(rejection_objective(pol, y, 0.8, 0.3, exact, True).logit_gradient,
                                   plain, atol=1e-14)

    def test_reinforce(self, toy_space):
        pol = PolicyState.initial(toy_space)
        y = record_from_indices(pol, (1, 1))
        res = reinforce_objective(pol, y, 0.9, 0.4)
        assert res.objective_value == pytest.approx(0.5 * math.log(1 / 9))
        np.testing.assert_allclose(res.logit_gradient, 0.5 * grad_log_prob(pol, y))
