"""Report figures (ROC/PR curves, link histograms) rendered with matplotlib."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import evaluation as ev  # noqa: E402

COLORS = {"ssim": "tab:blue", "procrustes": "tab:green"}
LABELS = {"ssim": "SSIM-based", "procrustes": "Procrustes-based"}

# PNG metadata carries the matplotlib version only; no timestamps.
_PNG_META = {"Software": None}


def _style():
    plt.rcParams.update({"font.size": 10, "axes.titlesize": 11, "axes.labelsize": 10,
                         "legend.fontsize": 8, "figure.dpi": 100})


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def roc_pr_figure(path, dataset_id: str, labels_by_method: dict) -> None:
    """ROC and PR curves of every method for one dataset, side by side."""
    _style()
    fig, (ax_roc, ax_pr) = plt.subplots(1, 2, figsize=(8, 3.6))
    for method, labels in labels_by_method.items():
        roc, pr = ev.roc_curve(labels), ev.pr_curve(labels)
        color = COLORS.get(method)
        ax_roc.plot(roc.x, roc.y, color=color,
                    label=f"{LABELS.get(method, method)} (AUC {ev.roc_auc(labels):.3f})")
        ax_pr.step(pr.x, pr.y, where="post", color=color,
                   label=f"{LABELS.get(method, method)} (AP {ev.pr_auc(labels):.3f})")
    ax_roc.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    ax_roc.set(xlabel="false positive rate", ylabel="true positive rate", title=f"{dataset_id}: ROC",
               xlim=(0, 1), ylim=(0, 1.02))
    ax_pr.set(xlabel="recall", ylabel="precision", title=f"{dataset_id}: precision-recall",
              xlim=(0, 1), ylim=(0, 1.02))
    for ax in (ax_roc, ax_pr):
        ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def histogram_figure(path, method: str, dists_by_dataset: dict, bins: int = 30) -> None:
    """Intra- vs inter-cluster distance histograms pooled over datasets.

    ``dists_by_dataset`` maps dataset id to ``(intra, inter)`` arrays.
    Intra counts use the left axis, inter counts the right one.
    """
    _style()
    intra = np.concatenate([np.asarray(a, float) for a, _ in dists_by_dataset.values()] or [np.zeros(0)])
    inter = np.concatenate([np.asarray(b, float) for _, b in dists_by_dataset.values()] or [np.zeros(0)])
    allv = np.concatenate([intra, inter])
    allv = allv[np.isfinite(allv)]
    edges = np.histogram_bin_edges(allv if len(allv) else [0.0, 1.0], bins=bins)
    fig, ax = plt.subplots(figsize=(5, 3.4))
    ax2 = ax.twinx()
    ax2.hist(inter[np.isfinite(inter)], bins=edges, color="tab:blue", alpha=0.5, label="inter-cluster")
    ax.hist(intra[np.isfinite(intra)], bins=edges, color="tab:red", alpha=0.8, hatch="//",
            edgecolor="darkred", label="intra-cluster")
    ax.set_zorder(ax2.get_zorder() + 1)
    ax.patch.set_visible(False)
    ax.set(xlabel=f"{LABELS.get(method, method)} distance", ylabel="intra-cluster count")
    ax2.set_ylabel("inter-cluster count")
    n_viol = sum(ev.overlap_violations(a, b) for a, b in dists_by_dataset.values())
    ax.set_title(f"{LABELS.get(method, method)}: {n_viol} overlap violation(s)")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def report_figures(out_dir, matrices: dict, manifests, methods, bins: int = 30) -> list:
    """Write every report figure under ``out_dir/figures``; returns the paths."""
    fig_dir = Path(out_dir) / "figures"
    written = []
    pooled = {m: {} for m in methods}
    for man in sorted(manifests, key=lambda m: m.dataset_id):
        truth = man.truth()
        if len(truth) < 2:
            continue
        per_method = {}
        for method in methods:
            labels = ev.pair_labels(matrices[man.dataset_id][method], truth)
            if labels.y_true.any() and (~labels.y_true).any():
                per_method[method] = labels
                pooled[method][man.dataset_id] = (labels.score[labels.y_true], labels.score[~labels.y_true])
        if per_method:
            p = fig_dir / f"roc_pr_{man.dataset_id}.png"
            roc_pr_figure(p, man.dataset_id, per_method)
            written.append(p)
    for method, dists in pooled.items():
        if dists:
            p = fig_dir / f"hist_{method}.png"
            histogram_figure(p, method, dists, bins)
            written.append(p)
    return written
