import json

import numpy as np
import pytest

from slearn.datagen import sample_sem, simulate_sem, standardize, SemWeights
from slearn.graphs import Cpdag, Dag, consistent_extension, dag_to_cpdag
from slearn.learners import (
    DEFAULT_GES,
    DEFAULT_PC_STABLE,
    AlgorithmConfig,
    run_config,
    run_ges,
    run_pc_stable,
)
from slearn.scoring import SufficientStats, total_bic

from oracles import all_dags, equivalence_key


def stats_for(truth, m, seed):
    raw, _ = sample_sem(truth, m, seed)
    return SufficientStats.from_data(standardize(raw))


def test_config_validation_and_json():
    c = AlgorithmConfig.ges(5.87273, 185, False)
    assert AlgorithmConfig.from_json_dict(json.loads(c.dumps())) == c
    p = AlgorithmConfig.pc_stable(0.05, 1000)
    assert AlgorithmConfig.from_json_dict(p.to_json_dict()) == p
    with pytest.raises(ValueError):
        AlgorithmConfig.ges(0.5, 10, False)  # penalty below range
    with pytest.raises(ValueError):
        AlgorithmConfig.pc_stable(0.5, 10)  # alpha above range
    with pytest.raises(ValueError):
        AlgorithmConfig(kind="ges", penalty=2.0, max_parents=5, faithfulness=False, alpha=0.05)
    with pytest.raises(ValueError):
        AlgorithmConfig(kind="tabu")


def test_pc_recovers_collider():
    truth = Dag(3, [(0, 2), (1, 2)])
    hits = 0
    for seed in range(20):
        s = stats_for(truth, 5000, seed)
        c = run_pc_stable(s, 0.05, 1000)
        hits += c == Cpdag(3, directed=[(0, 2), (1, 2)])
    assert hits >= 18


def test_pc_independent_columns_mostly_empty():
    rng = np.random.default_rng(31)
    data = standardize(rng.standard_normal((2000, 8)))
    s = SufficientStats.from_data(data)
    c = run_pc_stable(s, 0.01, 1000)
    assert len(c.skeleton()) <= 2  # ~alpha per pair of 28


def test_pc_skeleton_order_independent():
    truth = Dag(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    raw, _ = sample_sem(truth, 800, seed=5)
    data = standardize(raw)
    base = run_pc_stable(SufficientStats.from_data(data), 0.05, 1000).skeleton()
    rng = np.random.default_rng(6)
    for _ in range(10):
        perm = rng.permutation(4)
        permuted = data[:, perm]
        c = run_pc_stable(SufficientStats.from_data(permuted), 0.05, 1000)
        mapped = {
            (min(perm[u], perm[v]), max(perm[u], perm[v])) for u, v in c.skeleton()
        }
        assert mapped == set(base)


def test_pc_max_depth_limits_conditioning():
    # With max_depth=1, chains of confounders cannot be fully separated;
    # just check it runs and returns a valid CPDAG contract.
    truth = Dag(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    s = stats_for(truth, 2000, seed=7)
    c = run_pc_stable(s, 0.05, 1)
    assert c.n == 5


def test_ges_empty_on_independent_columns():
    rng = np.random.default_rng(32)
    s = SufficientStats.from_data(standardize(rng.standard_normal((1000, 6))))
    assert run_ges(s, 2.0, 1000, False) == Cpdag(6)


def test_ges_recovers_chain_equivalence_class():
    truth = Dag(3, [(0, 1), (1, 2)])
    s = stats_for(truth, 1000, seed=8)
    got = run_ges(s, 2.0, 1000, False)
    assert got == dag_to_cpdag(truth)
    # matches exhaustive score maximization over all 25 DAGs on 3 nodes
    best = max(all_dags(3), key=lambda g: total_bic(s, g, 2.0))
    assert got == dag_to_cpdag(best)


def test_ges_huge_penalty_empties_graph():
    truth = Dag(10, [(i, i + 1) for i in range(9)])
    s = stats_for(truth, 1000, seed=9)
    c = run_ges(s, 1000.0, 1000, False)
    assert len(c.skeleton()) == 0


def test_ges_forward_trace_strictly_increasing():
    truth = Dag(5, [(0, 1), (1, 2), (0, 3), (3, 4)])
    s = stats_for(truth, 1000, seed=10)
    trace = []
    run_ges(s, 2.0, 1000, False, score_trace=trace)
    assert len(trace) >= 2
    assert all(b > a for a, b in zip(trace, trace[1:]))


def test_ges_max_parents_bounds_extension_parents():
    truth = Dag(5, [(0, 2), (1, 2), (3, 2), (2, 4)])
    s = stats_for(truth, 2000, seed=11)
    c = run_ges(s, 2.0, 1, False)
    ext = consistent_extension(c)
    assert all(len(ext.parents(v)) <= 1 for v in range(5))


def test_ges_faithfulness_prescreen_restricts_inserts():
    # Collider: marginally independent co-parents are pre-screened away,
    # so the collider pair can never be connected directly.
    truth = Dag(3, [(0, 2), (1, 2)])
    sem = SemWeights({(0, 2): 0.9, (1, 2): 0.9}, np.array([1.0, 1.0, 0.5]))
    data = standardize(simulate_sem(truth, sem, 5000, seed=12))
    s = SufficientStats.from_data(data)
    with_f = run_ges(s, 2.0, 1000, True)
    assert (0, 1) not in with_f.skeleton()


def test_learners_deterministic():
    truth = Dag(6, [(0, 1), (1, 2), (3, 4), (4, 5), (0, 5)])
    s = stats_for(truth, 800, seed=13)
    assert run_ges(s, 2.0, 1000, False) == run_ges(s, 2.0, 1000, False)
    assert run_pc_stable(s, 0.05, 3) == run_pc_stable(s, 0.05, 3)


def test_ges_brute_force_optimality_rate():
    # Statistical check: GES reaches the global BIC optimum's class on
    # most small strong-signal instances (it is only locally optimal).
    dags4 = all_dags(4)
    wins = 0
    for seed in range(25):
        rng = np.random.default_rng(1000 + seed)
        edges = [(0, 1), (1, 2), (2, 3)] if seed % 2 else [(0, 2), (1, 2), (2, 3)]
        truth = Dag(4, edges)
        s = stats_for(truth, 1000, seed=2000 + seed)
        got = run_ges(s, 2.0, 1000, False)
        best = max(dags4, key=lambda g: total_bic(s, g, 2.0))
        wins += got == dag_to_cpdag(best)
    assert wins >= 22


def test_run_config_dispatch():
    truth = Dag(3, [(0, 1), (1, 2)])
    s = stats_for(truth, 500, seed=14)
    assert run_config(s, DEFAULT_GES) == run_ges(s, 1.0, 1000, False)
    assert run_config(s, DEFAULT_PC_STABLE) == run_pc_stable(s, 0.05, 1000)
