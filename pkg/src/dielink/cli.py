"""Command line interface.

Subcommands: ingest, distance, cluster, eval, synth, report. Every
parameter can come from a JSON config file (``--config``); command line
flags override it. Exit codes: 0 success, 1 validation error, 2
computation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .cluster import optimal_threshold, single_linkage_threshold
from .config import RunConfig
from .distance import METHODS, DistanceMatrix, MissingImagesError
from .manifest import ManifestError, from_folders, ingest
from .pipeline import load_matrices, run_distances, run_eval
from .synth import synth_dataset

log = logging.getLogger("dielink")

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2


class ValidationError(Exception):
    pass


def _add_run_options(p):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--method", choices=[*METHODS, "both"], help="distance method(s)")
    p.add_argument("--workers", type=int, help="worker processes for pair computations")
    p.add_argument("--cache-dir", help="pair cache root (default: $DIELINK_CACHE)")
    p.add_argument("--seed", type=int, help="global seed for the per-pair RANSAC seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dielink", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate manifests and report pair/link counts")
    p.add_argument("manifests", nargs="*")
    p.add_argument("--from-dir", help="build a manifest from a <die_label>/<image> folder tree")
    p.add_argument("--dataset-id", help="dataset id for --from-dir (default: folder name)")
    p.add_argument("--write", help="where to write the manifest built by --from-dir")

    p = sub.add_parser("distance", help="compute distance matrices")
    p.add_argument("manifests", nargs="+")
    _add_run_options(p)

    p = sub.add_parser("cluster", help="single-linkage clustering of one matrix")
    p.add_argument("matrix", help="square matrix CSV")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--threshold", type=float, help="cut height")
    g.add_argument("--truth", help="manifest whose labels select the F1-optimal threshold")
    p.add_argument("-o", "--output", required=True, help="partition CSV")

    p = sub.add_parser("eval", help="evaluate matrices written by `distance`")
    p.add_argument("manifests", nargs="+")
    _add_run_options(p)

    p = sub.add_parser("synth", help="generate synthetic die-link datasets")
    p.add_argument("--out", required=True)
    p.add_argument("--datasets", type=int, default=1, help="number of datasets")
    p.add_argument("--n-dies", type=int, default=4)
    p.add_argument("--coins-per-die", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.2, help="nuisance level in [0, 1]")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="distances + evaluation + figures in one go")
    p.add_argument("manifests", nargs="+")
    _add_run_options(p)
    p.add_argument("--no-figures", action="store_true")
    return parser


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "method", None):
        cfg.methods = list(METHODS) if args.method == "both" else [args.method]
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    if getattr(args, "cache_dir", None):
        cfg.cache_dir = args.cache_dir
    if getattr(args, "seed", None) is not None:
        cfg.params = dataclasses.replace(cfg.params, global_seed=args.seed)
    return cfg


def _manifests(paths):
    out, errors = [], []
    for p in paths:
        try:
            out.append(ingest(p))
        except ManifestError as exc:
            errors.extend(f"{p}: {e}" for e in exc.errors)
    ids = [m.dataset_id for m in out]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        errors.append(f"duplicate dataset ids: {dup}")
    if errors:
        raise ValidationError("\n".join(errors))
    return out


def _setup_output(cfg: RunConfig):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logging.getLogger().addHandler(handler)
    return handler


def cmd_ingest(args):
    if args.from_dir:
        try:
            m = from_folders(args.from_dir, args.dataset_id)
        except ManifestError as exc:
            raise ValidationError("\n".join(exc.errors)) from exc
        target = args.write or str(Path(args.from_dir) / "manifest.csv")
        m.write(target)
        print(target)
        args.manifests = [*args.manifests, target]
    if not args.manifests:
        raise ValidationError("no manifest given")
    ms = _manifests(args.manifests)
    for m in ms:
        print(json.dumps(m.summary(), sort_keys=True))


def cmd_distance(args):
    cfg = _config(args)
    ms = _manifests(args.manifests)
    _setup_output(cfg)
    for m in ms:
        mats = run_distances(cfg, m)
        for method, dm in mats.items():
            print(f"{m.dataset_id}\t{method}\t{m.n_pairs} pairs\t{dm.n_computed} computed")


def cmd_cluster(args):
    try:
        dm = DistanceMatrix.from_csv(args.matrix)
    except (OSError, ValueError, IndexError) as exc:
        raise ValidationError(f"cannot read matrix {args.matrix}: {exc}") from exc
    if args.truth:
        truth = _manifests([args.truth])[0].truth()
        missing = set(truth.ids) - set(dm.ids)
        if missing:
            raise ValidationError(f"matrix lacks labeled coins: {sorted(missing)}")
        try:
            t = optimal_threshold(dm.subset(truth.ids), truth)
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
    else:
        t = args.threshold
    part = single_linkage_threshold(dm, t)
    part.to_csv(args.output)
    print(json.dumps({"threshold": t, "n_clusters": len(part.clusters())}))


def cmd_eval(args, figures=False):
    cfg = _config(args)
    ms = _manifests(args.manifests)
    _setup_output(cfg)
    try:
        mats = load_matrices(cfg.out_dir, ms, cfg.methods)
    except FileNotFoundError as exc:
        raise ValidationError(f"missing matrix, run `dielink distance` first: {exc}") from exc
    _finish_eval(cfg, mats, ms, figures)


def _finish_eval(cfg, mats, ms, figures):
    report = run_eval(cfg, mats, ms)
    if figures:
        from .plotting import report_figures

        for p in report_figures(cfg.out_dir, mats, ms, cfg.methods, cfg.hist_bins):
            log.info("figure %s", p)
    for ds, entry in report["datasets"].items():
        for method, res in entry["methods"].items():
            if "roc_auc" in res:
                print(f"{ds}\t{method}\tROC AUC {res['roc_auc']:.4f}\tPR AUC {res['pr_auc']:.4f}"
                      f"\tviolations {res['overlap_violations']}")
    print(f"metrics: {Path(cfg.out_dir) / 'metrics.json'}")


def cmd_report(args):
    cfg = _config(args)
    ms = _manifests(args.manifests)
    _setup_output(cfg)
    mats = {m.dataset_id: run_distances(cfg, m) for m in ms}
    _finish_eval(cfg, mats, ms, figures=not args.no_figures)


def cmd_synth(args):
    out = Path(args.out)
    for k in range(args.datasets):
        ds = f"synth{k + 1}"
        m = synth_dataset(out / ds, args.n_dies, args.coins_per_die, args.noise,
                          seed=args.seed + k, size=args.size, dataset_id=ds)
        print(out / ds / "manifest.csv")
        log.info("%s: %s", ds, m.summary())


COMMANDS = {"ingest": cmd_ingest, "distance": cmd_distance, "cluster": cmd_cluster,
            "eval": cmd_eval, "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    logging.getLogger().setLevel(logging.INFO)
    try:
        COMMANDS[args.command](args)
    except (ValidationError, MissingImagesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValueError as exc:
        # bad configuration values surface as ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("computation failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
