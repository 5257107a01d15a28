import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import working_subset_brute
from latentbo.benchmarks import MeteredOracle
from latentbo.engine import (
    HISTORY_COLUMNS,
    RunConfig,
    Triplet,
    bo_step,
    build_initial_dataset,
    exploration_metric,
    history_csv,
    run,
    unaligned_count,
    working_subset,
)
from latentbo.errors import ConfigError


def small(**kw):
    base = dict(budget=60, n_init=20, batch_size=5, top_k=10, n_cand=64, gp_steps_init=20, gp_steps=5)
    base.update(kw)
    return RunConfig(**base)


def _triplets(draw_pairs):
    return [Triplet(np.array([k + 1, 0]), np.zeros(2), float(y)) for k, y in draw_pairs]


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 6), st.integers(-5, 5)), max_size=30),
    st.integers(0, 10),
    st.integers(1, 10),
)
def test_working_subset_matches_brute_force(pairs, n_recent, k):
    data = _triplets(pairs)
    got = working_subset(data, n_recent, k)
    expected = [data[i] for i in working_subset_brute(data, n_recent, k)]
    assert [id(t) for t in got] == [id(t) for t in expected]
    assert len({t.key for t in got}) == len(got)


def test_config_validation_names_key():
    for kw, key in [
        (dict(n_init=0), "n_init"),
        (dict(budget=5, n_init=10), "budget"),
        (dict(align_mode="magic"), "align_mode"),
        (dict(anchor_policy="best"), "anchor_policy"),
        (dict(tr_length_init=5.0), "tr_length_init"),
        (dict(batch_size=0), "batch_size"),
    ]:
        with pytest.raises(ConfigError) as info:
            RunConfig(**kw)
        assert info.value.key == key


def test_initial_dataset_is_aligned_without_extra_calls(trained_vae, string_task):
    cfg = small()
    oracle = MeteredOracle(string_task.score, cfg.budget)
    state = build_initial_dataset(string_task, cfg, trained_vae, oracle, np.random.default_rng(0))
    assert oracle.calls == cfg.n_init
    assert len(state.dataset) == cfg.n_init
    assert unaligned_count(trained_vae, [t for t in state.dataset if t.aligned]) == 0


def test_recentering_initial_dataset_costs_double(trained_vae, string_task):
    cfg = small(align_mode="recentering")
    oracle = MeteredOracle(string_task.score, cfg.budget)
    state = build_initial_dataset(string_task, cfg, trained_vae, oracle, np.random.default_rng(0))
    assert oracle.calls == 2 * cfg.n_init
    assert unaligned_count(trained_vae, state.dataset) == 0


def test_bo_step_spends_one_batch(trained_vae, string_task):
    cfg = small()
    oracle = MeteredOracle(string_task.score, cfg.budget)
    state = build_initial_dataset(string_task, cfg, trained_vae, oracle, np.random.default_rng(0))
    state = bo_step(state, cfg, np.random.default_rng(1))
    assert oracle.calls == cfg.n_init + cfg.batch_size
    assert state.steps == 1
    assert all(t.aligned for t in state.dataset[-cfg.batch_size :])


@pytest.mark.parametrize("mode", ["inversion", "recentering", "encoder_only"])
def test_run_respects_budget_and_records_history(trained_vae, string_task, mode):
    res = run(small(budget=57, align_mode=mode, n_fail_max=2), string_task, trained_vae)
    s = res.state
    assert s.oracle.calls == 57
    assert len(s.history) == 57
    assert [h[0] for h in s.history] == list(range(1, 58))
    best = [h[2] for h in s.history]
    assert best == list(np.maximum.accumulate([h[1] for h in s.history]))
    assert s.best_score == max(rec[2] for rec in s.oracle.log)


def test_vae_retrains_after_failure_streak(trained_vae, string_task):
    res = run(small(budget=80, n_fail_max=2), string_task, trained_vae)
    assert res.state.retrains >= 1


@pytest.mark.parametrize("policy", ["pas", "objective", "acquisition", "random"])
def test_every_policy_runs(trained_vae, string_task, policy):
    res = run(small(budget=35, anchor_policy=policy), string_task, trained_vae)
    assert res.state.oracle.calls == 35


def test_independent_queries_and_isotropic_regions(trained_vae, string_task):
    res = run(small(budget=35, query_mode="independent", region_mode="isotropic"), string_task, trained_vae)
    assert res.state.oracle.calls == 35


def test_exploration_metric_counts_distinct_sequences():
    assert exploration_metric([[1, 2, 0], [1, 2], [3], [1, 2, 0, 0]]) == [1, 1, 2, 2]


def test_exploration_metric_from_state(trained_vae, string_task):
    res = run(small(budget=40), string_task, trained_vae)
    curve = exploration_metric(res.state)
    assert len(curve) == 40 and curve[-1] == len(res.state.seen)
    assert all(b - a in (0, 1) for a, b in zip(curve, curve[1:]))


def test_history_csv_format():
    text = history_csv([(1, 0.5, 0.5, 1, 0.8, 0, "init"), (2, 0.25, 0.5, 2, 0.8, 0, "bo")])
    assert text.startswith(",".join(HISTORY_COLUMNS) + "\n")
    assert "\r" not in text
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[2] == ["2", "0.25", "0.5", "2", "0.8", "0", "bo"]


def test_same_seed_same_files(trained_vae, string_task, tmp_path):
    h, s = tmp_path / "h.csv", tmp_path / "s.json"
    cfg = small(seed=3, history_path=str(h), summary_path=str(s))
    outputs = []
    for _ in range(2):
        run(cfg, string_task, trained_vae)
        outputs.append((h.read_bytes(), s.read_bytes()))
    assert outputs[0] == outputs[1]
    summary = json.loads(outputs[0][1])
    assert summary["seed"] == 3 and summary["oracle_calls"] == 60
    assert (tmp_path / "s.timing.json").exists()


def test_different_seeds_differ(trained_vae, string_task):
    a = run(small(seed=1), string_task, trained_vae)
    b = run(small(seed=2), string_task, trained_vae)
    assert [h[1] for h in a.history] != [h[1] for h in b.history]


def test_run_does_not_mutate_given_vae(trained_vae, string_task):
    before = trained_vae.copy()
    run(small(budget=60, n_fail_max=1), string_task, trained_vae)
    assert all(np.array_equal(before[k], trained_vae[k]) for k in before.weights)
