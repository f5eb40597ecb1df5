"""Threshold single-linkage clustering and leave-one-out threshold selection."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

log = logging.getLogger(__name__)

STRATEGIES = ("max", "mean", "median", "min")


class Partition:
    """Assignment of coin ids to canonical cluster labels.

    Clusters are numbered 0, 1, ... in the order of their smallest member
    id, so two partitions with the same groups compare equal regardless of
    the labels they were built from.
    """

    def __init__(self, assignment: Mapping):
        groups = {}
        for cid, lab in assignment.items():
            groups.setdefault(lab, []).append(str(cid))
        members = sorted(sorted(g) for g in groups.values())
        self.assignment = {cid: k for k, g in enumerate(members) for cid in g}

    @classmethod
    def from_labels(cls, ids, labels):
        ids = list(ids)
        labels = list(labels)
        if len(ids) != len(labels):
            raise ValueError("ids and labels differ in length")
        if len(set(map(str, ids))) != len(ids):
            raise ValueError("duplicate ids")
        return cls(dict(zip(ids, labels)))

    @classmethod
    def singletons(cls, ids):
        return cls({cid: i for i, cid in enumerate(ids)})

    @property
    def ids(self) -> list:
        return sorted(self.assignment)

    def __len__(self):
        return len(self.assignment)

    def __eq__(self, other):
        return isinstance(other, Partition) and self.assignment == other.assignment

    def __repr__(self):
        return f"Partition({self.clusters()})"

    def label(self, cid) -> int:
        return self.assignment[str(cid)]

    def labels_for(self, ids) -> np.ndarray:
        return np.array([self.assignment[str(c)] for c in ids], dtype=int)

    def clusters(self) -> list:
        out = {}
        for cid, lab in self.assignment.items():
            out.setdefault(lab, []).append(cid)
        return [sorted(out[k]) for k in sorted(out)]

    def restrict(self, ids) -> "Partition":
        return Partition({str(c): self.assignment[str(c)] for c in ids})

    def refines(self, other: "Partition") -> bool:
        """True if every cluster of ``self`` lies inside a cluster of ``other``."""
        return all(len({other.label(c) for c in g}) == 1 for g in self.clusters())

    def n_positive_pairs(self) -> int:
        return sum(k * (k - 1) // 2 for k in Counter(self.assignment.values()).values())

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coin_id", "cluster_label"])
            for cid in self.ids:
                w.writerow([cid, self.assignment[cid]])

    @classmethod
    def from_csv(cls, path) -> "Partition":
        with open(path, newline="") as fh:
            return cls({r["coin_id"]: r["cluster_label"] for r in csv.DictReader(fh)})


class _DisjointSet:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return None
        if ry < rx:
            rx, ry = ry, rx
        self.parent[ry] = rx
        return rx, ry


def single_linkage_threshold(D, t: float) -> Partition:
    """Connected components of the graph joining pairs with ``D[i, j] <= t``.

    This is the single-linkage dendrogram cut at height ``t``.
    """
    if not np.isfinite(t):
        raise ValueError("threshold must be finite")
    ids, values = D.ids, D.values
    ds = _DisjointSet(len(ids))
    ii, jj = np.nonzero(np.triu(values <= t, 1))
    for i, j in zip(ii, jj):
        ds.union(int(i), int(j))
    return Partition({cid: ds.find(k) for k, cid in enumerate(ids)})


def candidate_thresholds(D) -> np.ndarray:
    """Midpoints between consecutive distinct off-diagonal values, plus one
    value below the minimum and one above the maximum."""
    vals = np.unique(D.off_diagonal())
    vals = vals[np.isfinite(vals)]
    if len(vals) == 0:
        return np.array([0.0])
    span = max(vals[-1] - vals[0], 1.0)
    mids = (vals[:-1] + vals[1:]) / 2.0
    return np.concatenate([[vals[0] - span], mids, [vals[-1] + span]])


def _f1(tp, n_pred, n_true):
    if n_pred == 0 or n_true == 0:
        return 0.0
    prec, rec = tp / n_pred, tp / n_true
    return 0.0 if tp == 0 else 2 * prec * rec / (prec + rec)


def threshold_scores(D, truth: Partition) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise F1 of the single-linkage partition at every candidate threshold.

    Sweeps the candidates in increasing order, merging clusters as edges
    enter (Kruskal style) and tracking predicted and true-positive pair
    counts incrementally.
    """
    truth_labels = truth.labels_for(D.ids)
    n_true = truth.restrict(D.ids).n_positive_pairs()
    if n_true == 0:
        raise ValueError("ground truth has no linked pairs; F1 is undefined")
    cands = candidate_thresholds(D)
    n = len(D.ids)
    iu, ju = np.triu_indices(n, 1)
    w = D.values[iu, ju]
    order = np.argsort(w, kind="stable")
    ds = _DisjointSet(n)
    size = [1] * n
    comp = [Counter({int(truth_labels[k]): 1}) for k in range(n)]
    n_pred = tp = 0
    scores = np.zeros(len(cands))
    e = 0
    for c, t in enumerate(cands):
        while e < len(order) and w[order[e]] <= t:
            k = order[e]
            merged = ds.union(int(iu[k]), int(ju[k]))
            if merged is not None:
                keep, gone = merged
                n_pred += size[keep] * size[gone]
                tp += sum(cnt * comp[keep].get(lab, 0) for lab, cnt in comp[gone].items())
                size[keep] += size[gone]
                comp[keep].update(comp[gone])
            e += 1
        scores[c] = _f1(tp, n_pred, n_true)
    return cands, scores


def optimal_threshold(D, truth: Partition) -> float:
    """Candidate threshold with the best pairwise F1 (smallest one on ties)."""
    cands, scores = threshold_scores(D, truth)
    return float(cands[int(np.argmax(scores))])


@dataclass
class ThresholdPlan:
    target: str
    strategy: str
    per_dataset_optima: dict = field(default_factory=dict)
    resulting_threshold: float = float("nan")
    skipped: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def aggregate(values, strategy: str) -> float:
    values = np.asarray(list(values), dtype=np.float64)
    if len(values) == 0:
        raise ValueError("nothing to aggregate")
    funcs = {"max": np.max, "mean": np.mean, "median": np.median, "min": np.min}
    if strategy not in funcs:
        raise ValueError(f"unknown strategy {strategy!r}")
    return float(funcs[strategy](values))


def loo_threshold(target: str, datasets: Mapping, strategy: str,
                  optima: Mapping | None = None) -> ThresholdPlan:
    """Threshold for ``target`` aggregated from the other datasets' optima.

    ``datasets`` maps a dataset name to ``(D, truth)``. Source datasets
    whose optimum is undefined are skipped and listed in the plan.
    ``optima`` may carry precomputed per-dataset optima.
    """
    if len(datasets) < 2:
        raise ValueError("need at least 2 datasets")
    if target not in datasets:
        raise KeyError(target)
    plan = ThresholdPlan(target=target, strategy=strategy)
    for name in sorted(datasets):
        if name == target:
            continue
        if optima is not None and name in optima:
            plan.per_dataset_optima[name] = float(optima[name])
            continue
        D, truth = datasets[name]
        try:
            plan.per_dataset_optima[name] = optimal_threshold(D, truth)
        except ValueError as exc:
            plan.skipped[name] = str(exc)
            log.warning("dataset %s skipped: %s", name, exc)
    plan.resulting_threshold = aggregate(plan.per_dataset_optima.values(), strategy)
    return plan
