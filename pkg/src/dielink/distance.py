"""Pairwise coin distances and dataset-level distance matrices.

Two pair pipelines are provided:

* ``ssim``: preprocess, SIFT + ratio-test matching, similarity alignment
  of the first image onto the second (only with more than 4 matches and a
  plausible scale), then the mean SSIM distance.
* ``procrustes``: edge-map preprocessing, DoG keypoints + ORB descriptors,
  cross-check matching, RANSAC homography, then
  ``log(P) + 1/n_in`` where ``P`` is the Procrustes distance between the
  mapped and target keypoints.

Matrices are assembled from independent pair tasks, so the result does
not depend on the worker count or on scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import features as ft
from . import geometry as geo
from .imgproc import PreprocParams, preproc_procrustes, preproc_ssim, read_image
from .ssim import SsimParams, ssim_metric

log = logging.getLogger(__name__)

METHODS = ("ssim", "procrustes")
CACHE_FIELDS = ["id_a", "id_b", "raw", "normalized", "method", "fingerprint"]


@dataclass(frozen=True)
class DistanceParams:
    preproc: PreprocParams = PreprocParams()
    ssim: SsimParams = SsimParams()
    ratio: float = 0.75
    min_matches: int = 4
    scale_tol: float = 0.25
    similarity_robust: bool = True
    similarity_thresh: float = 3.0
    homography_thresh: float = 3.0
    log_floor: float = 1e-12
    global_seed: int = 42

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceParams":
        d = dict(d)
        pre = dict(d.pop("preproc", {}))
        if "clahe_tile_grid" in pre:
            pre["clahe_tile_grid"] = tuple(pre["clahe_tile_grid"])
        return cls(preproc=PreprocParams(**pre), ssim=SsimParams(**d.pop("ssim", {})), **d)


def fingerprint(obj) -> str:
    """Stable short hash of a JSON-serialisable object (key order ignored)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def params_fingerprint(method: str, params: DistanceParams) -> str:
    return fingerprint({"method": method, "params": params.to_dict()})


def pair_seed(id_a: str, id_b: str, global_seed: int) -> int:
    """Per-pair RNG seed, independent of pair order and scheduling."""
    lo, hi = sorted((str(id_a), str(id_b)))
    digest = hashlib.sha256(f"{lo}\x1f{hi}\x1f{global_seed}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class PairDiagnostics:
    n_matches: int = 0
    transform: dict = field(default_factory=dict)
    gate_triggered: bool = False
    n_in: Optional[int] = None
    raw_value: float = math.nan
    status: str = "ok"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["raw_value"] = _fmt(self.raw_value)
        return d


def _fmt(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# Per-image features
# --------------------------------------------------------------------------

@dataclass
class SsimFeatures:
    image: np.ndarray
    keypoints: ft.KeypointSet
    descriptors: np.ndarray


@dataclass
class ProcrustesFeatures:
    keypoints: ft.KeypointSet
    descriptors: np.ndarray


def _load(raw):
    if isinstance(raw, (str, os.PathLike)):
        return read_image(raw)
    return np.asarray(raw, dtype=np.float64)


def prepare(raw, method: str, params: DistanceParams = DistanceParams()):
    """Preprocess one image and extract what its pair computations need."""
    img = _load(raw)
    if method == "ssim":
        pre = preproc_ssim(img, params.preproc)
        kps, desc = ft.sift_detect_describe(pre)
        return SsimFeatures(pre, kps, desc)
    if method == "procrustes":
        pre = preproc_procrustes(img, params.preproc)
        kps = ft.detect_keypoints_baseline(pre)
        kps, desc = ft.orb_describe(pre, kps)
        return ProcrustesFeatures(kps, desc)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Pair pipelines
# --------------------------------------------------------------------------

def ssim_pair(fa: SsimFeatures, fb: SsimFeatures, params: DistanceParams = DistanceParams(),
              seed: int = 42) -> tuple[float, PairDiagnostics]:
    diag = PairDiagnostics()
    m = ft.match_ratio_test(fa.descriptors, fb.descriptors, params.ratio)
    diag.n_matches = len(m)
    t = geo.SimilarityTransform.identity()
    if len(m) > params.min_matches:
        try:
            t = geo.estimate_similarity(fa.keypoints.points[m.idx_a], fb.keypoints.points[m.idx_b],
                                        robust=params.similarity_robust,
                                        reproj_thresh=params.similarity_thresh, seed=seed)
        except geo.EstimationError:
            diag.status = "estimation_failed"
    else:
        diag.status = "too_few_matches"
    gate = {}
    t = geo.scale_gate(t, params.scale_tol, gate)
    diag.gate_triggered = gate["gate_triggered"]
    diag.transform = asdict(t)
    aligned = geo.apply_similarity(fa.image, t)
    value = ssim_metric(aligned, fb.image, params.ssim)
    diag.raw_value = value
    return value, diag


def procrustes_pair(fa: ProcrustesFeatures, fb: ProcrustesFeatures,
                    params: DistanceParams = DistanceParams(),
                    seed: int = 42) -> tuple[float, PairDiagnostics]:
    """Raw baseline value ``log(max(P, floor)) + 1/n_in``; ``inf`` if incomparable."""
    diag = PairDiagnostics()
    m = ft.match_cross_check(fa.descriptors, fb.descriptors)
    diag.n_matches = len(m)
    try:
        pa = fa.keypoints.points[m.idx_a]
        pb = fb.keypoints.points[m.idx_b]
        hom = geo.estimate_homography_ransac(pa, pb, params.homography_thresh, seed=seed)
        diag.n_in = hom.n_in
        diag.transform = {"H": hom.H.tolist()}
        mapped = geo.apply_homography(pa, hom.H)
        p = geo.procrustes_distance(mapped, pb)
    except geo.EstimationError as exc:
        diag.status = f"incomparable: {exc}"
        diag.raw_value = math.inf
        return math.inf, diag
    value = math.log(max(p, params.log_floor)) + 1.0 / hom.n_in
    diag.raw_value = value
    return value, diag


PAIR_FUNCS = {"ssim": ssim_pair, "procrustes": procrustes_pair}


def ssim_distance(raw_a, raw_b, params: DistanceParams = DistanceParams(), seed: int = 42):
    """SSIM-based distance between two raw images (arrays or paths)."""
    return ssim_pair(prepare(raw_a, "ssim", params), prepare(raw_b, "ssim", params), params, seed)


def procrustes_based_distance(raw_a, raw_b, params: DistanceParams = DistanceParams(), seed: int = 42):
    """Raw (unnormalized) Procrustes-based distance between two raw images."""
    return procrustes_pair(prepare(raw_a, "procrustes", params),
                           prepare(raw_b, "procrustes", params), params, seed)


# --------------------------------------------------------------------------
# Matrix
# --------------------------------------------------------------------------

@dataclass
class DistanceMatrix:
    """Symmetric pairwise distances with zero diagonal."""

    ids: list
    values: np.ndarray
    method: str
    normalized: bool = False
    fingerprint: str = ""
    raw: Optional[np.ndarray] = None
    diagnostics: list = field(default_factory=list)
    n_computed: int = 0

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ValueError("values must be an n x n matrix")
        if len(set(self.ids)) != n:
            raise ValueError("duplicate ids")

    def __len__(self):
        return len(self.ids)

    def index(self, coin_id) -> int:
        return self.ids.index(str(coin_id))

    def subset(self, ids) -> "DistanceMatrix":
        idx = [self.index(i) for i in ids]
        return DistanceMatrix([self.ids[i] for i in idx], self.values[np.ix_(idx, idx)],
                              self.method, self.normalized, self.fingerprint)

    def off_diagonal(self) -> np.ndarray:
        iu = np.triu_indices(len(self), 1)
        return self.values[iu]

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id"] + self.ids)
            for cid, row in zip(self.ids, self.values):
                w.writerow([cid] + [_fmt(v) for v in row])

    def meta(self) -> dict:
        return {"method": self.method, "normalized": self.normalized,
                "fingerprint": self.fingerprint, "n": len(self)}

    @classmethod
    def from_csv(cls, path, method: str = "", normalized: bool = False, fingerprint: str = ""):
        path = Path(path)
        meta_path = path.with_suffix(".json")
        if meta_path.exists():
            meta = json.loads(meta_path.read_text())
            method = meta.get("method", method)
            normalized = meta.get("normalized", normalized)
            fingerprint = meta.get("fingerprint", fingerprint)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        ids = rows[0][1:]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        if [r[0] for r in rows[1:]] != ids:
            raise ValueError(f"{path}: row and column ids differ")
        return cls(ids, values, method, normalized, fingerprint)


class MissingImagesError(FileNotFoundError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing images for ids: " + ", ".join(self.missing))


def normalize_procrustes(raw: np.ndarray, log_floor: float = 1e-12) -> np.ndarray:
    """Map raw baseline values into [0, 1].

    Raw values are ``log(P) + 1/n_in`` and can be negative, so they are
    first shifted by ``-log(log_floor)`` (making every finite value
    positive) and then divided by the largest finite value. Incomparable
    pairs (``inf``) map to 1 and the diagonal to 0.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[0]
    off = ~np.eye(n, dtype=bool)
    finite = off & np.isfinite(raw)
    out = np.ones_like(raw)
    if finite.any():
        shifted = raw - math.log(log_floor)
        out[finite] = shifted[finite] / shifted[finite].max()
    np.fill_diagonal(out, 0.0)
    return out


# Worker-process state, set once by the pool initializer.
_WORKER = {}


def _init_worker(feats, method, params):
    _WORKER.update(feats=feats, method=method, params=params)


def _prepare_task(args):
    raw, method, params = args
    return prepare(raw, method, params)


def _pair_task(task):
    i, j, seed = task
    feats, method, params = _WORKER["feats"], _WORKER["method"], _WORKER["params"]
    value, diag = PAIR_FUNCS[method](feats[i], feats[j], params, seed)
    return i, j, value, diag


def _file_digest(raw) -> str:
    h = hashlib.sha256()
    if isinstance(raw, (str, os.PathLike)):
        with open(raw, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    else:
        arr = np.ascontiguousarray(raw)
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()[:16]


def _read_cache(cache_path: Path, method: str):
    rows, diags = {}, {}
    if cache_path.exists():
        with open(cache_path, newline="") as fh:
            for r in csv.DictReader(fh):
                if r.get("method") == method:
                    rows[(r["id_a"], r["id_b"], r["fingerprint"])] = float(r["raw"])
    diag_path = cache_path.with_suffix(".diag.jsonl")
    if diag_path.exists():
        for line in diag_path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                diags[(rec["id_a"], rec["id_b"], rec["fingerprint"])] = rec
    return rows, diags


def _diag_record(id_a, id_b, fp, diag: PairDiagnostics, method: str) -> dict:
    return {"id_a": id_a, "id_b": id_b, "method": method, "fingerprint": fp, **diag.to_dict()}


def distance_matrix(items: Sequence, method: str, params: DistanceParams = DistanceParams(),
                    workers: int = 1, cache_path=None) -> DistanceMatrix:
    """Compute all ``n(n-1)/2`` pair distances of a dataset.

    ``items`` is a sequence of ``(coin_id, image)`` where ``image`` is a
    path or an array. For each unordered pair the coin with the smaller id
    is the one aligned onto the other. Procrustes matrices are normalized
    with :func:`normalize_procrustes`; SSIM matrices hold raw values.

    With ``cache_path`` every computed pair is appended to a long-form CSV
    (plus a ``.diag.jsonl`` sidecar) as soon as it is available, and pairs
    already present with a matching fingerprint are not recomputed.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    items = [(str(cid), raw) for cid, raw in items]
    if len(items) < 2:
        raise ValueError("need at least 2 coins")
    missing = [cid for cid, raw in items
               if isinstance(raw, (str, os.PathLike)) and not Path(raw).is_file()]
    if missing:
        raise MissingImagesError(missing)

    ids = [cid for cid, _ in items]
    n = len(ids)
    pfp = params_fingerprint(method, params)
    digests = [_file_digest(raw) for _, raw in items]

    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            a, b = (i, j) if ids[i] <= ids[j] else (j, i)
            pairs.append((a, b))

    def row_fp(a, b):
        return fingerprint([pfp, digests[a], digests[b]])

    cached, cached_diag = {}, {}
    if cache_path is not None:
        cache_path = Path(cache_path)
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        cached, cached_diag = _read_cache(cache_path, method)

    raw = np.zeros((n, n))
    diags = {}
    todo = []
    for a, b in pairs:
        key = (ids[a], ids[b], row_fp(a, b))
        if key in cached and key in cached_diag:
            raw[a, b] = raw[b, a] = cached[key]
            diags[(a, b)] = cached_diag[key]
        else:
            todo.append((a, b, pair_seed(ids[a], ids[b], params.global_seed)))

    log.info("%s: %d pairs, %d cached, %d to compute", method, len(pairs), len(pairs) - len(todo), len(todo))

    if todo:
        need = sorted({k for a, b, _ in todo for k in (a, b)})
        fh = dh = None
        if cache_path is not None:
            fresh = not cache_path.exists()
            fh = open(cache_path, "a", newline="")
            writer = csv.writer(fh, lineterminator="\n")
            if fresh:
                writer.writerow(CACHE_FIELDS)
            dh = open(cache_path.with_suffix(".diag.jsonl"), "a")
        try:
            if workers <= 1:
                feats = {k: prepare(items[k][1], method, params) for k in need}
                _init_worker(feats, method, params)
                results = map(_pair_task, todo)
                _consume(results, ids, raw, diags, method, row_fp, fh, dh)
            else:
                with ProcessPoolExecutor(max_workers=workers) as ex:
                    prepared = ex.map(_prepare_task, [(items[k][1], method, params) for k in need])
                    feats = dict(zip(need, prepared))
                with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                         initargs=(feats, method, params)) as ex:
                    chunk = max(1, len(todo) // (4 * workers))
                    results = ex.map(_pair_task, todo, chunksize=chunk)
                    _consume(results, ids, raw, diags, method, row_fp, fh, dh)
        finally:
            if fh is not None:
                fh.close()
                dh.close()

    if method == "procrustes":
        values = normalize_procrustes(raw, params.log_floor)
    else:
        values = raw.copy()
    np.fill_diagonal(values, 0.0)

    ordered_diags = [diags[(a, b)] for a, b in sorted(pairs, key=lambda p: (ids[p[0]], ids[p[1]]))]
    dm = DistanceMatrix(ids, values, method, normalized=(method == "procrustes"),
                        fingerprint=pfp, raw=raw, diagnostics=ordered_diags, n_computed=len(todo))

    if cache_path is not None:
        _rewrite_cache(cache_path, dm, pairs, row_fp)
    return dm


def _consume(results, ids, raw, diags, method, row_fp, fh, dh):
    writer = csv.writer(fh, lineterminator="\n") if fh is not None else None
    for a, b, value, diag in results:
        raw[a, b] = raw[b, a] = value
        rec = _diag_record(ids[a], ids[b], row_fp(a, b), diag, method)
        diags[(a, b)] = rec
        if writer is not None:
            writer.writerow([ids[a], ids[b], _fmt(value), "", method, row_fp(a, b)])
            dh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            dh.flush()


def _rewrite_cache(cache_path: Path, dm: DistanceMatrix, pairs, row_fp) -> None:
    """Rewrite the cache with the final normalized values of this run only."""
    tmp = cache_path.with_suffix(".tmp")
    order = sorted(pairs, key=lambda p: (dm.ids[p[0]], dm.ids[p[1]]))
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CACHE_FIELDS)
        for a, b in order:
            w.writerow([dm.ids[a], dm.ids[b], _fmt(dm.raw[a, b]), _fmt(dm.values[a, b]),
                        dm.method, row_fp(a, b)])
    os.replace(tmp, cache_path)
    diag_path = cache_path.with_suffix(".diag.jsonl")
    diag_path.write_text("".join(json.dumps(d, sort_keys=True) + "\n" for d in dm.diagnostics))


def write_diagnostics(path, dm: DistanceMatrix) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(json.dumps(d, sort_keys=True) + "\n" for d in dm.diagnostics))
