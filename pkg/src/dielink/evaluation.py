"""Pairwise classification metrics, ROC/PR curves and clustering scores.

Scores are distances: lower means more likely linked. A pair is
predicted positive at threshold ``t`` when ``distance <= t``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cluster import Partition


@dataclass
class PairLabels:
    pairs: list          # (id_a, id_b) with id_a before id_b in matrix order
    y_true: np.ndarray   # bool
    score: np.ndarray    # distance

    def __len__(self):
        return len(self.pairs)


@dataclass
class CurvePoints:
    kind: str
    x: np.ndarray
    y: np.ndarray
    thresholds: np.ndarray

    def to_csv(self, path) -> None:
        names = {"roc": ("fpr", "tpr"), "pr": ("recall", "precision")}[self.kind]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", *names])
            for t, x, y in zip(self.thresholds, self.x, self.y):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def pairs_from_partition(p: Partition, ids=None) -> tuple[list, np.ndarray]:
    """All unordered pairs over ``ids`` (default: sorted ids) and whether
    each pair shares a cluster."""
    ids = list(p.ids if ids is None else ids)
    lab = p.labels_for(ids)
    iu, ju = np.triu_indices(len(ids), 1)
    return [(ids[i], ids[j]) for i, j in zip(iu, ju)], lab[iu] == lab[ju]


def pair_labels(D, truth: Partition) -> PairLabels:
    """Pair labels over the coins of ``D`` that ``truth`` covers."""
    ids = [c for c in D.ids if c in truth.assignment]
    sub = D.subset(ids)
    pairs, y = pairs_from_partition(truth, ids)
    return PairLabels(pairs, y, sub.off_diagonal())


def _sweep(labels: PairLabels):
    y = np.asarray(labels.y_true, dtype=bool)
    s = np.asarray(labels.score, dtype=np.float64)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative pair")
    order = np.argsort(s, kind="stable")
    s, y = s[order], y[order]
    # last index of every group of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    return s[last], tp, fp, n_pos, n_neg


def roc_curve(labels: PairLabels) -> CurvePoints:
    thr, tp, fp, n_pos, n_neg = _sweep(labels)
    return CurvePoints("roc", np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos], np.r_[-np.inf, thr])


def roc_auc(labels: PairLabels) -> float:
    """Trapezoidal area; equals P(d+ < d-) + P(d+ = d-)/2."""
    c = roc_curve(labels)
    return float(np.sum(np.diff(c.x) * (c.y[1:] + c.y[:-1]) / 2.0))


def pr_curve(labels: PairLabels) -> CurvePoints:
    thr, tp, fp, n_pos, _ = _sweep(labels)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return CurvePoints("pr", np.r_[0.0, recall], np.r_[1.0, precision], np.r_[-np.inf, thr])


def pr_auc(labels: PairLabels) -> float:
    """Average precision: sum of precision weighted by recall increments."""
    c = pr_curve(labels)
    return float(np.sum(np.diff(c.x) * c.y[1:]))


def binary_metrics(pred, true) -> dict:
    """Precision, recall, F1 and accuracy over a common pair universe.

    0/0 conventions: precision is 1 when nothing is predicted and nothing
    is linked, 0 when nothing is predicted but links exist; recall is 1
    when there is no link and nothing is predicted, 0 otherwise.
    """
    pred = np.asarray(pred, dtype=bool)
    true = np.asarray(true, dtype=bool)
    if pred.shape != true.shape:
        raise ValueError("pred and true must cover the same pairs")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if tp + fn == 0 else 0.0
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 1.0 if tp + fp == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 1.0
    return {"precision": precision, "recall": recall, "f1": f1, "accuracy": accuracy,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def _contingency(a: Partition, b: Partition):
    ids = a.ids
    if ids != b.ids:
        raise ValueError("partitions cover different ids")
    la, lb = a.labels_for(ids), b.labels_for(ids)
    table = np.zeros((la.max() + 1, lb.max() + 1), dtype=np.int64)
    np.add.at(table, (la, lb), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(a: Partition, b: Partition) -> float:
    """Adjusted Rand index (Hubert-Arabie). Degenerate 0/0 cases give 1."""
    table = _contingency(a, b)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(1)).sum()
    sum_b = _comb2(table.sum(0)).sum()
    expected = sum_a * sum_b / _comb2(n) if n > 1 else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a: Partition, b: Partition) -> float:
    """Normalized mutual information, arithmetic-mean normalization."""
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    ha, hb = _entropy(table.sum(1)), _entropy(table.sum(0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    pa, pb = table.sum(1) / n, table.sum(0) / n
    nz = table > 0
    pij = table[nz] / n
    mi = float((pij * np.log(pij / np.outer(pa, pb)[nz])).sum())
    denom = (ha + hb) / 2.0
    return float(min(1.0, max(0.0, mi / denom))) if denom > 0 else 0.0


@dataclass
class LinkHistograms:
    edges: np.ndarray
    intra: np.ndarray
    inter: np.ndarray
    violations: int

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_left", "bin_right", "intra", "inter"])
            for k in range(len(self.intra)):
                w.writerow([repr(float(self.edges[k])), repr(float(self.edges[k + 1])),
                            int(self.intra[k]), int(self.inter[k])])


def overlap_violations(intra, inter) -> int:
    """Number of intra-cluster distances above the smallest inter-cluster one."""
    intra = np.asarray(intra, dtype=np.float64)
    inter = np.asarray(inter, dtype=np.float64)
    if len(intra) == 0 or len(inter) == 0:
        return 0
    return int(np.sum(intra > inter.min()))


def link_histograms(D, truth: Partition, bins=30) -> LinkHistograms:
    labels = pair_labels(D, truth)
    s = labels.score[np.isfinite(labels.score)]
    y = labels.y_true[np.isfinite(labels.score)]
    edges = np.histogram_bin_edges(s, bins=bins)
    intra, _ = np.histogram(s[y], bins=edges)
    inter, _ = np.histogram(s[~y], bins=edges)
    return LinkHistograms(edges, intra, inter, overlap_violations(s[y], s[~y]))


def rank_candidates(D) -> list:
    """All pairs ``(id_a, id_b, distance)`` by ascending distance, ties by ids."""
    iu, ju = np.triu_indices(len(D), 1)
    rows = []
    for i, j in zip(iu, ju):
        a, b = sorted((D.ids[i], D.ids[j]))
        rows.append((float(D.values[i, j]), a, b))
    rows.sort()
    return [(a, b, d) for d, a, b in rows]


def clustering_scores(pred: Partition, truth: Partition) -> dict:
    """ARI, NMI and the pairwise binary metrics of a predicted partition."""
    ids = truth.ids
    pred = pred.restrict(ids)
    _, yp = pairs_from_partition(pred, ids)
    _, yt = pairs_from_partition(truth, ids)
    bm = binary_metrics(yp, yt)
    return {"ARI": ari(pred, truth), "NMI": nmi(pred, truth), "Prec.": bm["precision"],
            "Rec.": bm["recall"], "F1": bm["f1"], "Acc.": bm["accuracy"]}


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj
