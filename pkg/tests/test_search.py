import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import tabnas.search as search_mod
from tabnas.data import teacher_classification
from tabnas.errors import ConfigError, SelectionFailed
from tabnas.policy import PolicyState, grad_log_prob, record_from_indices
from tabnas.rewards import RewardSpec, exact_valid_prob, rejection_objective
from tabnas.search import (
    RunLog,
    SearchAborted,
    SearchConfig,
    SelectionConfig,
    replica_rl_step,
    run_search,
    select_final,
)
from tabnas.space import ResourceConstraint, SearchSpace, param_count
from tabnas.supernet import TrainHyper, WarmupSchedule

from conftest import median_limit, small_space


def toy_config(toy, **kw):
    table, con = toy
    kw.setdefault("warmup", WarmupSchedule(0.0))
    kw.setdefault("epochs", 2)
    kw.setdefault("steps_per_epoch", 20)
    return SearchConfig(table.space, con, table=table, **kw)


class TestConfig:
    def test_field_named(self, toy):
        with pytest.raises(ConfigError) as err:
            toy_config(toy, rl_learning_rate=0.0)
        assert err.value.field == "rl_learning_rate"

    def test_warmup_needs_epochs(self, toy):
        with pytest.raises(ConfigError) as err:
            toy_config(toy, warmup=WarmupSchedule(0.25), epochs=3)
        assert err.value.field == "epochs"

    def test_oracle_needs_table(self, toy):
        table, con = toy
        with pytest.raises(ConfigError) as err:
            SearchConfig(table.space, con)
        assert err.value.field == "table"

    def test_supernet_dimensions(self, toy):
        table, con = toy
        ds = teacher_classification(50, d=3, seed=0)
        with pytest.raises(ConfigError) as err:
            SearchConfig(table.space, con, evaluation="supernet", dataset=ds)
        assert err.value.field == "dataset"

    def test_selection_bounds(self):
        with pytest.raises(ConfigError):
            SelectionConfig(m=2, n=3)


class TestReplicaStep:
    def test_single_replica_is_plain_update(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits(rng.normal(size=6))
        pv = exact_valid_prob(pol, con)
        y = record_from_indices(pol, (1, 1))
        single = rejection_objective(pol, y, 0.7, 0.4, pv, feasible=True)
        res = replica_rl_step(pol, RewardSpec(), con, [y], [0.7], 0.4, pv)
        np.testing.assert_array_equal(res.logit_gradient, single.logit_gradient)
        assert res.objective_value == single.objective_value

    def test_equal_advantage_is_plain_mean(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits(rng.normal(size=6))
        recs = [record_from_indices(pol, i) for i in [(0, 0), (1, 0), (0, 2), (2, 0)]]
        res = replica_rl_step(pol, RewardSpec("quality"), con, recs, [0.9] * 4, 0.5)
        expected = np.mean([0.4 * grad_log_prob(pol, r) for r in recs], axis=0)
        np.testing.assert_allclose(res.logit_gradient, expected, atol=1e-14)

    def test_rescale_for_skipped_samples(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits(rng.normal(size=6))
        pv = exact_valid_prob(pol, con)
        feas = [(0, 0), (2, 0), (1, 1)]
        infeas = [(2, 2), (2, 1), (1, 2), (2, 2), (1, 2)]
        recs = [record_from_indices(pol, i) for i in feas + infeas]
        qs = [0.8, 0.6, 0.7] + [None] * 5
        res = replica_rl_step(pol, RewardSpec(), con, recs, qs, 0.5, pv)
        assert res.diagnostics["n_contributing"] == 3
        assert res.diagnostics["rescale"] == pytest.approx(8 / 3)
        expected = np.mean([rejection_objective(pol, r, q, 0.5, pv, True).logit_gradient
                            for r, q in zip(recs[:3], qs[:3])], axis=0)
        np.testing.assert_allclose(res.logit_gradient, expected, atol=1e-14)

    def test_all_skipped(self, toy):
        table, con = toy
        pol = PolicyState.initial(table.space)
        recs = [record_from_indices(pol, (2, 2))] * 3
        res = replica_rl_step(pol, RewardSpec(), con, recs, [None] * 3, 0.5, exact_valid_prob(pol, con))
        assert res.skipped and res.skip_reason == "infeasible_sample"
        np.testing.assert_array_equal(res.logit_gradient, 0.0)


class TestSelectFinal:
    def test_deterministic_singleton(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([0, 0, 10, 10, 0, 0])
        assert select_final(pol, con, SelectionConfig(), rng) == [(4, 2)]

    def test_deterministic_but_infeasible_falls_back(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([0, 0, 10, 0, 0, 4])
        out = select_final(pol, con, SelectionConfig(), rng)
        assert all(param_count(a, table.space) <= 25 for a in out)
        assert out[0] == (4, 2)

    def test_uniform_top_three(self, rng, toy):
        table, con = toy
        out = select_final(PolicyState.initial(table.space), con, SelectionConfig(500, 3), rng)
        assert set(out) == {(4, 2), (3, 3), (2, 4)}

    def test_tie_break_by_probability(self, rng, toy):
        table, con = toy
        # (4,2), (3,3) and (2,4) all cost 25; (3,3) is the most likely of them
        pol = PolicyState.initial(table.space).with_logits([0, 1.0, 0, 0, 1.0, 0])
        assert select_final(pol, con, SelectionConfig(500, 1), rng) == [(3, 3)]

    def test_failure(self, rng, toy):
        table, con = toy
        pol = PolicyState.initial(table.space).with_logits([0, 0, 40, 0, 0, 40])
        with pytest.raises(SelectionFailed):
            select_final(pol, con, SelectionConfig(20, 1), rng)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_always_feasible(self, seed):
        rng = np.random.default_rng(seed)
        sp = small_space(rng)
        con = median_limit(sp)
        pol = PolicyState.initial(sp).with_logits(rng.normal(scale=2.0, size=int(sp.offsets[-1])))
        try:
            out = select_final(pol, con, SelectionConfig(200, 3), rng)
        except SelectionFailed:
            return
        assert 1 <= len(out) <= 3 and len(set(out)) == len(out)
        assert all(param_count(a, sp) <= con.limit for a in out)


class TestRunSearch:
    def test_warmup_everywhere_leaves_policy(self, toy):
        pol, log = run_search(toy_config(toy, warmup=WarmupSchedule(1.0), epochs=4, steps_per_epoch=5))
        np.testing.assert_array_equal(pol.logits, 0.0)
        assert all(r["phase"] == "warmup" for r in log.records)
        assert len(log.records) == 20

    def test_deterministic(self, toy):
        cfg = toy_config(toy, seed=7)
        a, b = run_search(cfg), run_search(cfg)
        np.testing.assert_array_equal(a[0].logits, b[0].logits)
        assert a[1].lines(timing=False) == b[1].lines(timing=False)
        c = run_search(toy_config(toy, seed=8))
        assert not np.array_equal(a[0].logits, c[0].logits)

    def test_noisy_oracle_deterministic(self):
        from tabnas.oracle import toy_example
        cfg = toy_config(toy_example(noise_sd=0.01), seed=3, replicas=4)
        assert run_search(cfg)[1].lines(timing=False) == run_search(cfg)[1].lines(timing=False)

    def test_record_fields(self, toy):
        _, log = run_search(toy_config(toy, replicas=3))
        rec = log.records[-1]
        for key in ("step", "phase", "rl_archs", "feasible", "Q", "r", "J", "skipped", "baseline",
                    "pv_exact", "skips", "probs"):
            assert key in rec
        assert len(rec["rl_archs"]) == 3
        assert set(log.footer) >= {"final_most_probable", "skips", "selected", "selection_failed"}

    def test_skips_leave_baseline(self, toy):
        _, log = run_search(toy_config(toy, epochs=1, steps_per_epoch=60, seed=1))
        recs = log.records
        for prev, cur in zip(recs, recs[1:]):
            if prev["skipped"]:
                assert cur["baseline"] == prev["baseline"]
        assert log.footer["skips"]["infeasible_sample"] == sum(r["skipped"] for r in recs)

    def test_valid_probability_rises(self, toy):
        rises = 0
        for seed in range(50):
            cfg = toy_config(toy, warmup=WarmupSchedule(0.25), epochs=4, steps_per_epoch=50, seed=seed,
                             log_probabilities=False)
            _, log = run_search(cfg)
            boundary = [r for r in log.records if r["phase"] == "warmup"][-1]["pv_exact"]
            rises += log.records[-1]["pv_exact"] >= boundary
        assert rises >= 45

    def test_mc_mode(self, toy):
        _, log = run_search(toy_config(toy, reward=RewardSpec(pv_mode="mc", mc_samples=64)))
        assert any("pv_estimate" in r for r in log.records)
        assert log.header["exact_pv"] is False

    def test_failure_cap(self, toy, monkeypatch):
        monkeypatch.setattr(search_mod, "evaluate", lambda table, arch, rng=None: math.nan)
        with pytest.raises(SearchAborted):
            run_search(toy_config(toy, reward=RewardSpec("quality"), max_failures=3))
        _, log = run_search(toy_config(toy, reward=RewardSpec("quality"), max_failures=100))
        assert log.footer["skips"]["failed"] == 40

    def test_supernet_smoke(self):
        sp = SearchSpace(((2, 4), (2, 4)), 4, 1)
        ds = teacher_classification(200, d=4, seed=0)
        cfg = SearchConfig(sp, ResourceConstraint(30), evaluation="supernet", dataset=ds, epochs=4,
                           train_hyper=TrainHyper(batch_size=32), seed=2, replicas=2)
        pol, log = run_search(cfg)
        assert len(log.records) == 4 * math.ceil(160 / 32)
        assert any(r["phase"] == "warmup" and r.get("full_supernet") for r in log.records)
        assert all(r["weight_loss"] is not None for r in log.records)
        assert np.all(np.isfinite(pol.logits))


class TestRunLog:
    def test_append_only(self):
        log = RunLog()
        log.append({"step": 0})
        with pytest.raises(ValueError):
            log.append({"step": 0})

    def test_round_trip(self, tmp_path, toy):
        _, log = run_search(toy_config(toy))
        log.write(tmp_path / "run.jsonl")
        back = RunLog.read(tmp_path / "run.jsonl")
        assert back.records == log.records and back.footer == log.footer and back.header == log.header
