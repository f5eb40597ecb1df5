import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from dielink import cluster as cl
from dielink.cluster import Partition
from dielink.distance import DistanceMatrix

from .oracles import components_oracle, optimal_threshold_oracle, pairwise_f1_oracle


def _random_matrix(n, seed):
    r = np.random.default_rng(seed)
    v = r.uniform(0, 1, (n, n))
    v = np.triu(v, 1)
    v = v + v.T
    return DistanceMatrix([f"c{i}" for i in range(n)], v, "ssim")


def _as_index_sets(p: Partition, ids):
    pos = {c: i for i, c in enumerate(ids)}
    return {frozenset(pos[c] for c in g) for g in p.clusters()}


# --- Partition ---------------------------------------------------------------

def test_partition_canonical_labels():
    p = Partition({"c": "x", "a": "y", "b": "x", "d": "z"})
    assert p.clusters() == [["a"], ["b", "c"], ["d"]]
    assert p.assignment == {"a": 0, "b": 1, "c": 1, "d": 2}
    assert p == Partition({"a": 5, "b": 1, "c": 1, "d": 0})
    assert p.n_positive_pairs() == 1


def test_partition_csv_roundtrip(tmp_path):
    p = Partition.from_labels(["a", "b", "c"], [1, 1, 2])
    p.to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text() == "coin_id,cluster_label\na,0\nb,0\nc,1\n"
    assert Partition.from_csv(tmp_path / "p.csv") == p
    with pytest.raises(ValueError):
        Partition.from_labels(["a", "a"], [1, 2])


# --- single linkage ----------------------------------------------------------

def test_threshold_extremes():
    dm = _random_matrix(6, 0)
    off = dm.off_diagonal()
    assert len(cl.single_linkage_threshold(dm, off.min() - 1e-9).clusters()) == 6
    assert len(cl.single_linkage_threshold(dm, off.max()).clusters()) == 1
    with pytest.raises(ValueError):
        cl.single_linkage_threshold(dm, float("nan"))


def test_single_linkage_matches_dfs_oracle():
    for seed in range(30):
        dm = _random_matrix(8, seed)
        for t in np.random.default_rng(seed).uniform(0, 1, 5):
            p = cl.single_linkage_threshold(dm, t)
            assert _as_index_sets(p, dm.ids) == components_oracle(dm.values.tolist(), t)


def test_single_linkage_matches_scipy_dendrogram_cut():
    for seed in range(20):
        dm = _random_matrix(9, seed)
        Z = linkage(squareform(dm.values, checks=False), method="single")
        for t in np.random.default_rng(seed + 1).uniform(0.05, 0.6, 4):
            labels = fcluster(Z, t, criterion="distance")
            assert cl.single_linkage_threshold(dm, t) == Partition.from_labels(dm.ids, labels)


def test_edge_rule_is_inclusive():
    dm = DistanceMatrix(["a", "b"], [[0, 0.5], [0.5, 0]], "ssim")
    assert len(cl.single_linkage_threshold(dm, 0.5).clusters()) == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1))
def test_single_linkage_monotone(seed, t1, t2):
    t1, t2 = sorted((t1, t2))
    dm = _random_matrix(7, seed)
    assert cl.single_linkage_threshold(dm, t1).refines(cl.single_linkage_threshold(dm, t2))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.permutations(list(range(7))))
def test_single_linkage_invariant_to_id_order(seed, t, perm):
    dm = _random_matrix(7, seed)
    ids = [dm.ids[i] for i in perm]
    assert cl.single_linkage_threshold(dm.subset(ids), t) == cl.single_linkage_threshold(dm, t)


# --- optimal threshold -------------------------------------------------------

def test_optimal_threshold_separated():
    truth = Partition.from_labels(list("abcde"), [0, 0, 1, 1, 2])
    v = np.full((5, 5), 0.9)
    v[0, 1] = v[1, 0] = 0.2
    v[2, 3] = v[3, 2] = 0.3
    v[0, 4] = v[4, 0] = 0.6
    np.fill_diagonal(v, 0)
    t = cl.optimal_threshold(DistanceMatrix(list("abcde"), v, "ssim"), truth)
    assert 0.3 < t < 0.6


def test_optimal_threshold_hand_case_with_inversion():
    # a-b linked at 0.1; c-d linked at 0.5; but a-c (unlinked) sits at 0.4
    ids = list("abcd")
    v = np.array([[0, 0.1, 0.4, 0.8], [0.1, 0, 0.7, 0.9], [0.4, 0.7, 0, 0.5], [0.8, 0.9, 0.5, 0]])
    truth = Partition.from_labels(ids, [0, 0, 1, 1])
    t = cl.optimal_threshold(DistanceMatrix(ids, v, "ssim"), truth)
    t_ref, _ = optimal_threshold_oracle(v.tolist(), [0, 0, 1, 1])
    assert t == t_ref == pytest.approx(0.25)


def test_optimal_threshold_matches_exhaustive_oracle():
    for seed in range(40):
        r = np.random.default_rng(seed)
        dm = _random_matrix(7, seed)
        labels = r.integers(0, 3, 7)
        truth = Partition.from_labels(dm.ids, labels)
        if truth.n_positive_pairs() == 0:
            continue
        t_ref, f_ref = optimal_threshold_oracle(dm.values.tolist(), list(labels))
        cands, scores = cl.threshold_scores(dm, truth)
        assert cl.optimal_threshold(dm, truth) == pytest.approx(t_ref, abs=1e-12)
        assert scores.max() == pytest.approx(f_ref, abs=1e-12)
        # incremental scores equal a from-scratch evaluation at each candidate
        for c, s in zip(cands, scores):
            comps = components_oracle(dm.values.tolist(), c)
            assert s == pytest.approx(pairwise_f1_oracle(comps, list(labels)), abs=1e-12)


def test_optimal_threshold_needs_links():
    dm = _random_matrix(4, 1)
    with pytest.raises(ValueError):
        cl.optimal_threshold(dm, Partition.singletons(dm.ids))


# --- leave-one-out -----------------------------------------------------------

def _separated_dataset(name, gap_lo, gap_hi):
    ids = [f"{name}{i}" for i in range(4)]
    v = np.full((4, 4), gap_hi)
    v[0, 1] = v[1, 0] = gap_lo
    np.fill_diagonal(v, 0)
    return DistanceMatrix(ids, v, "ssim"), Partition.from_labels(ids, [0, 0, 1, 2])


def test_loo_equal_optima():
    data = {k: _separated_dataset(k, 0.2, 0.6) for k in "pqr"}
    for s in cl.STRATEGIES:
        plan = cl.loo_threshold("p", data, s)
        assert plan.resulting_threshold == pytest.approx(0.4)
        assert set(plan.per_dataset_optima) == {"q", "r"}


def test_loo_aggregation_arithmetic():
    data = {"t": _separated_dataset("t", 0.1, 0.2)}
    optima = {"x": 0.2, "y": 0.4, "z": 0.9}
    for name in optima:
        data[name] = data["t"]
    expected = {"max": 0.9, "mean": 0.5, "median": 0.4, "min": 0.2}
    for s, v in expected.items():
        assert cl.loo_threshold("t", data, s, optima).resulting_threshold == pytest.approx(v)


def test_loo_skips_datasets_without_links(caplog):
    data = {k: _separated_dataset(k, 0.2, 0.6) for k in "pq"}
    dm, _ = _separated_dataset("s", 0.2, 0.6)
    data["s"] = (dm, Partition.singletons(dm.ids))
    plan = cl.loo_threshold("p", data, "max")
    assert list(plan.per_dataset_optima) == ["q"] and "s" in plan.skipped
    js = json.loads(plan.to_json())
    assert js["strategy"] == "max" and js["target"] == "p"


def test_loo_eight_datasets_use_the_other_seven():
    data = {f"DS{k}": _separated_dataset(f"DS{k}", 0.1 * k / 8, 0.9) for k in range(1, 9)}
    for target in data:
        plan = cl.loo_threshold(target, data, "mean")
        assert set(plan.per_dataset_optima) == set(data) - {target}


def test_loo_preconditions():
    data = {"a": _separated_dataset("a", 0.2, 0.6)}
    with pytest.raises(ValueError):
        cl.loo_threshold("a", data, "max")
    with pytest.raises(ValueError):
        cl.aggregate([0.1], "mode")
