"""Orchestration: distance matrices per dataset, then the evaluation bundle."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

from . import evaluation as ev
from .cluster import STRATEGIES, loo_threshold, optimal_threshold, single_linkage_threshold
from .config import RunConfig
from .distance import DistanceMatrix, distance_matrix, write_diagnostics
from .manifest import Manifest

log = logging.getLogger(__name__)

METRIC_KEYS = ("ARI", "NMI", "Prec.", "Rec.", "F1", "Acc.")


def matrix_path(out_dir, dataset_id, method) -> Path:
    return Path(out_dir) / dataset_id / f"matrix_{method}.csv"


def run_distances(config: RunConfig, manifest: Manifest) -> dict:
    """Compute (or load from cache) one matrix per requested method and
    write matrices, metadata and per-pair diagnostics."""
    out = {}
    for method in config.methods:
        cache = None
        if config.cache_dir:
            cache = Path(config.cache_dir) / manifest.dataset_id / f"pairs_{method}.csv"
        dm = distance_matrix(manifest.items(), method, config.params, config.workers, cache)
        log.info("%s/%s: %d pairs (%d computed)", manifest.dataset_id, method,
                 manifest.n_pairs, dm.n_computed)
        path = matrix_path(config.out_dir, manifest.dataset_id, method)
        dm.to_csv(path)
        ev.write_json(path.with_suffix(".json"), {**dm.meta(), "config": config.result_dict()})
        write_diagnostics(path.parent / f"diagnostics_{method}.jsonl", dm)
        out[method] = dm
    return out


def load_matrices(out_dir, manifests, methods) -> dict:
    return {m.dataset_id: {meth: DistanceMatrix.from_csv(matrix_path(out_dir, m.dataset_id, meth))
                           for meth in methods}
            for m in manifests}


def _write_ranking(path, dm: DistanceMatrix):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "id_a", "id_b", "distance"])
        for k, (a, b, d) in enumerate(ev.rank_candidates(dm), start=1):
            w.writerow([k, a, b, repr(d)])


def run_eval(config: RunConfig, matrices: dict, manifests) -> dict:
    """Curves, AUCs, histograms, leave-one-out clustering and the metric table.

    ``matrices`` maps ``dataset_id -> method -> DistanceMatrix``. Every
    artefact is written under ``config.out_dir``; the returned report is
    also saved as ``metrics.json``.
    """
    out_dir = Path(config.out_dir)
    manifests = {m.dataset_id: m for m in manifests}
    truths = {ds: m.truth() for ds, m in manifests.items()}
    report = {"config": config.result_dict(), "fingerprint": config.fingerprint,
              "datasets": {}, "table": []}

    for ds in sorted(manifests):
        m = manifests[ds]
        entry = {**m.summary(), "methods": {}}
        for method in config.methods:
            dm = matrices[ds][method]
            truth = truths[ds]
            res = {}
            d_dir = out_dir / ds
            d_dir.mkdir(parents=True, exist_ok=True)
            _write_ranking(d_dir / f"ranking_{method}.csv", dm)
            labels = ev.pair_labels(dm, truth) if len(truth) >= 2 else None
            if labels is not None and labels.y_true.any() and (~labels.y_true).any():
                roc, pr = ev.roc_curve(labels), ev.pr_curve(labels)
                roc.to_csv(d_dir / f"roc_{method}.csv")
                pr.to_csv(d_dir / f"pr_{method}.csv")
                res["roc_auc"] = ev.roc_auc(labels)
                res["pr_auc"] = ev.pr_auc(labels)
                hist = ev.link_histograms(dm, truth, config.hist_bins)
                hist.to_csv(d_dir / f"hist_{method}.csv")
                res["overlap_violations"] = hist.violations
                res["optimal_threshold"] = optimal_threshold(dm.subset(truth.ids), truth)
            else:
                res["skipped"] = "needs at least one linked and one unlinked labeled pair"
            entry["methods"][method] = res
        report["datasets"][ds] = entry

    if len(manifests) >= 2:
        _loo_clustering(config, matrices, manifests, truths, report)
    else:
        report["clustering_skipped"] = "leave-one-out needs at least 2 datasets"

    ev.write_json(out_dir / "metrics.json", report)
    return report


def _loo_clustering(config, matrices, manifests, truths, report):
    out_dir = Path(config.out_dir)
    for strategy in [s for s in STRATEGIES if s in config.strategies]:
        for ds in sorted(manifests):
            row = {"Clust.": f"AC_{strategy}", "ds": ds}
            for method in config.methods:
                sets = {}
                optima = {}
                for name, truth in truths.items():
                    dm = matrices[name][method].subset(truth.ids)
                    sets[name] = (dm, truth)
                    opt = report["datasets"][name]["methods"][method].get("optimal_threshold")
                    if opt is not None:
                        optima[name] = opt
                try:
                    plan = loo_threshold(ds, sets, strategy, optima)
                except ValueError as exc:
                    row[method] = {"skipped": str(exc)}
                    continue
                plan.to_json(out_dir / ds / f"threshold_{method}_{strategy}.json")
                pred = single_linkage_threshold(matrices[ds][method], plan.resulting_threshold)
                pred.to_csv(out_dir / ds / f"partition_{method}_{strategy}.csv")
                scores = ev.clustering_scores(pred, truths[ds])
                row[method] = {"threshold": plan.resulting_threshold,
                               **{k: scores[k] for k in METRIC_KEYS}}
            report["table"].append(row)
