import math

import numpy as np
import pytest

import privcgd.skeleton as skel
from oracles import pc_skeleton_reference
from privcgd.data import DataMatrix
from privcgd.datasets import chain_sem, sample_sem
from privcgd.kendall import weighted_tau
from privcgd.mechanisms import RngStream
from privcgd.skeleton import (
    Decision,
    SkeletonConfig,
    curate_skeleton,
    dp_ci_decision,
    naive_test_bound,
    pc_skeleton_nonprivate,
    run_skeleton,
    uniform_budget_skeleton,
    uniform_test_budget,
)


def chain(d=3, n=10_000, seed=0):
    data, _ = sample_sem(chain_sem(d, 2.0, 0.5, n, seed))
    return data


def test_decision_rule():
    coin = RngStream(0)
    assert dp_ci_decision(0.06, 0.05, 0.1, 0.1, coin) is Decision.DELETE
    assert dp_ci_decision(0.04, 0.05, 0.1, 0.1, coin) is Decision.KEEP
    with pytest.raises(ValueError):
        dp_ci_decision(0.05, 0.05, -0.1, 0.1, coin)


def test_band_is_a_fair_coin():
    coin = RngStream(7)
    keeps = sum(dp_ci_decision(0.05, 0.05, 0.1, 0.1, coin) is Decision.KEEP for _ in range(100_000))
    assert abs(keeps / 100_000 - 0.5) <= 0.01


def test_config_validation():
    for bad in ({"T": 0}, {"q": 0}, {"q": 1.5}, {"epsilon_total": 0}, {"beta1": -1}, {"delta_prime": 1}):
        with pytest.raises(ValueError):
            SkeletonConfig(**bad)


def test_naive_bound():
    assert naive_test_bound(5) == 80
    assert naive_test_bound(2) == 1


def test_two_features_run_one_test():
    data = chain(d=2, n=500)
    for mode in ("curate", "uniform", "nonprivate"):
        res = run_skeleton(data, SkeletonConfig(), mode)
        assert res.ci_test_count == {0: 1}


def test_nonprivate_matches_reference_pc():
    data = chain(d=5, n=3000, seed=3)

    def p(a, b, S):
        return weighted_tau(data, a, b, S, max_levels=20).p_value

    res = pc_skeleton_nonprivate(data, SkeletonConfig())
    assert res.graph.edges == pc_skeleton_reference(p, 5, 0.05)
    assert res.ledger.epsilon_spent == 0.0 and res.ledger.entries == []


def test_nonprivate_is_deterministic_given_data():
    data = chain(d=4, n=2000)
    a = pc_skeleton_nonprivate(data, SkeletonConfig(seed=1))
    b = pc_skeleton_nonprivate(data, SkeletonConfig(seed=99))
    assert a.graph == b.graph
    assert a.sepsets.to_list() == b.sepsets.to_list()


def test_fully_dependent_pair_kept():
    x = np.arange(200, dtype=float)
    res = pc_skeleton_nonprivate(DataMatrix(np.column_stack([x, 3 * x + 1]), ["a", "b"]))
    assert res.graph.edges == {(0, 1)}


def test_independent_columns_give_empty_skeleton_mostly():
    empty = 0
    for seed in range(20):
        X = np.random.default_rng(seed).standard_normal((10_000, 3))
        res = pc_skeleton_nonprivate(DataMatrix(X, ["a", "b", "c"]))
        empty += res.graph.num_edges() == 0
    # three level-0.05 tests: about 0.857 of runs end empty
    assert empty >= 16


def test_near_nonprivate_curate_recovers_chain():
    hits = 0
    for seed in range(20):
        data = chain(d=3, seed=seed)
        res = curate_skeleton(data, SkeletonConfig(epsilon_total=1e6, beta1=0.0, beta2=0.0, seed=seed))
        ref = pc_skeleton_nonprivate(data)
        hits += res.graph.edges == {(0, 1), (1, 2)} and res.sepsets.get(0, 2) == {1} and res.graph == ref.graph
    assert hits >= 18


def test_deleted_pairs_are_never_retested(monkeypatch):
    calls = []
    real = skel.weighted_tau

    def spy(data, a, b, S=(), **kw):
        calls.append((a, b, tuple(S)))
        return real(data, a, b, S, **kw)

    monkeypatch.setattr(skel, "weighted_tau", spy)
    data = chain(d=5, n=2000, seed=2)
    res = curate_skeleton(data, SkeletonConfig(epsilon_total=5.0, seed=2))
    last_call = {}
    for k, (a, b, S) in enumerate(calls):
        last_call[(a, b)] = k
    separated = [(a, b) for a in range(5) for b in range(a + 1, 5) if (a, b) in res.sepsets]
    assert separated
    for pair in separated:
        # the deleting test is the final one for that pair
        assert set(calls[last_call[pair]][2]) == set(res.sepsets.get(*pair))


@pytest.mark.parametrize("mode", ["curate", "uniform"])
@pytest.mark.parametrize("eps", [0.1, 1.0, 10.0])
def test_ledger_properties(mode, eps):
    data = chain(d=5, n=2000, seed=4)
    cfg = SkeletonConfig(epsilon_total=eps, seed=4)
    res = run_skeleton(data, cfg, mode)
    assert res.ledger.epsilon_spent <= eps + 1e-9
    assert res.ledger.delta_spent <= cfg.delta_total
    assert res.total_tests <= 80
    for rec in res.orders:
        assert rec.tests <= rec.edges_before * math.comb(3, rec.order)
    spent = [r.eps for r in res.orders if r.tests > 0]
    assert all(x >= y for x, y in zip(spent, spent[1:]))


def test_uniform_uses_one_per_test_budget():
    data = chain(d=5, n=2000, seed=5)
    res = uniform_budget_skeleton(data, SkeletonConfig(epsilon_total=2.0, seed=5))
    want = uniform_test_budget(2.0, 5, 1e-12)
    assert all(r.eps == pytest.approx(want) for r in res.orders if r.tests > 0)


def test_tiny_budget_truncates_without_overspending():
    data = chain(d=5, n=2000, seed=6)
    res = curate_skeleton(data, SkeletonConfig(epsilon_total=1e-3, delta_total=1e-12 * 2.5, seed=6))
    assert res.ledger.epsilon_spent <= 1e-3 + 1e-9
    assert res.ledger.delta_spent <= 2.5e-12


def test_same_seed_same_result():
    data = chain(d=5, n=2000, seed=8)
    a = curate_skeleton(data, SkeletonConfig(epsilon_total=1.0, seed=8))
    b = curate_skeleton(data, SkeletonConfig(epsilon_total=1.0, seed=8))
    assert a.to_dict() == b.to_dict()


def test_subsampling_reduces_rows():
    data = chain(d=3, n=4000, seed=9)
    res = curate_skeleton(data, SkeletonConfig(epsilon_total=10.0, q=0.5, seed=9))
    assert res.ledger.epsilon_spent <= 10.0 + 1e-9
