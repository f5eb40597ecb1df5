"""Keypoint detection, description and brute-force matching."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .imgproc import check_gray, to_uint8

ORB_PATCH = 31


@dataclass
class KeypointSet:
    """Keypoints as an ``(N, 2)`` array of ``(x, y)`` plus per-point attributes."""

    points: np.ndarray
    scales: np.ndarray
    orientations: np.ndarray
    responses: np.ndarray

    def __len__(self):
        return len(self.points)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(np.zeros((0, 2)), z, z.copy(), z.copy())

    @classmethod
    def from_points(cls, points, scale=float(ORB_PATCH)):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        n = len(pts)
        return cls(pts, np.full(n, scale), np.full(n, -1.0), np.zeros(n))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return KeypointSet(self.points[idx], self.scales[idx],
                           self.orientations[idx], self.responses[idx])


@dataclass
class MatchSet:
    """Matched index pairs with their descriptor distance, sorted by ``idx_a``."""

    idx_a: np.ndarray
    idx_b: np.ndarray
    distance: np.ndarray

    def __len__(self):
        return len(self.idx_a)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = sorted(pairs)
        if not pairs:
            return cls(np.zeros(0, int), np.zeros(0, int), np.zeros(0))
        a, b, d = zip(*pairs)
        return cls(np.array(a, dtype=int), np.array(b, dtype=int), np.array(d, dtype=np.float64))

    def pairs(self):
        return [(int(a), int(b), float(d)) for a, b, d in zip(self.idx_a, self.idx_b, self.distance)]


def _sift():
    return cv2.SIFT_create()


def _to_keypoint_set(kps) -> tuple[KeypointSet, np.ndarray]:
    if not kps:
        return KeypointSet.empty(), np.zeros(0, dtype=int)
    rows = [(-k.response, k.pt[0], k.pt[1], k.size, k.angle, i) for i, k in enumerate(kps)]
    rows.sort()
    order = np.array([r[5] for r in rows], dtype=int)
    pts = np.array([[r[1], r[2]] for r in rows], dtype=np.float64)
    return (KeypointSet(pts,
                        np.array([r[3] for r in rows], dtype=np.float64),
                        np.array([r[4] for r in rows], dtype=np.float64),
                        -np.array([r[0] for r in rows], dtype=np.float64)),
            order)


def sift_detect_describe(img) -> tuple[KeypointSet, np.ndarray]:
    """SIFT keypoints and 128-d descriptors.

    Keypoints are ordered by decreasing response, then x, y, scale and
    angle. Returns an empty set and a ``(0, 128)`` array when nothing is
    found.
    """
    img8 = to_uint8(check_gray(img))
    kps, desc = _sift().detectAndCompute(img8, None)
    ks, order = _to_keypoint_set(kps)
    if len(ks) == 0:
        return ks, np.zeros((0, 128), dtype=np.float32)
    return ks, np.asarray(desc, dtype=np.float32)[order]


def detect_keypoints_baseline(img) -> KeypointSet:
    """Difference-of-Gaussian extrema (the SIFT detector), no descriptors.

    Stands in for the Gaussian-process landmark detector of the baseline
    pipeline. Points repeated with several orientations are kept once.
    """
    img8 = to_uint8(check_gray(img))
    ks, _ = _to_keypoint_set(_sift().detect(img8, None))
    if len(ks) == 0:
        return ks
    _, first = np.unique(np.round(ks.points, 6), axis=0, return_index=True)
    return ks.subset(np.sort(first))


def orb_describe(img, kps: KeypointSet) -> tuple[KeypointSet, np.ndarray]:
    """256-bit ORB descriptors (``(N, 32)`` uint8) at the given keypoints.

    Keypoints closer than the descriptor patch margin to the border are
    dropped; the returned keypoint set is aligned with the descriptors.
    """
    img8 = to_uint8(check_gray(img))
    h, w = img8.shape
    margin = ORB_PATCH + 1
    pts = kps.points
    keep = np.flatnonzero((pts[:, 0] >= margin) & (pts[:, 0] < w - margin)
                          & (pts[:, 1] >= margin) & (pts[:, 1] < h - margin)) if len(kps) else np.zeros(0, int)
    if len(keep) == 0:
        return KeypointSet.empty(), np.zeros((0, 32), dtype=np.uint8)
    cv_kps = [cv2.KeyPoint(float(pts[i, 0]), float(pts[i, 1]), float(ORB_PATCH), -1, 0, 0, int(j))
              for j, i in enumerate(keep)]
    orb = cv2.ORB_create(edgeThreshold=ORB_PATCH, patchSize=ORB_PATCH)
    out_kps, desc = orb.compute(img8, cv_kps)
    if desc is None or not out_kps:
        return KeypointSet.empty(), np.zeros((0, 32), dtype=np.uint8)
    ids = np.array([k.class_id for k in out_kps], dtype=int)
    kept = kps.subset(keep[ids])
    kept.orientations = np.array([k.angle for k in out_kps], dtype=np.float64)
    return kept, np.asarray(desc, dtype=np.uint8)


def descriptor_distances(da: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Pairwise distances: Hamming for ``uint8`` (packed bits), Euclidean otherwise."""
    da = np.asarray(da)
    db = np.asarray(db)
    if da.dtype == np.uint8 and db.dtype == np.uint8:
        bits_a = np.unpackbits(da, axis=1).astype(np.int32)
        bits_b = np.unpackbits(db, axis=1).astype(np.int32)
        same = bits_a @ bits_b.T + (1 - bits_a) @ (1 - bits_b).T
        return (bits_a.shape[1] - same).astype(np.float64)
    da = da.astype(np.float64)
    db = db.astype(np.float64)
    sq = (da * da).sum(1)[:, None] + (db * db).sum(1)[None, :] - 2.0 * da @ db.T
    return np.sqrt(np.maximum(sq, 0.0))


def match_ratio_test(da, db, ratio: float = 0.75) -> MatchSet:
    """Brute-force nearest neighbours filtered by the ratio test.

    A query from ``da`` keeps its nearest neighbour in ``db`` iff
    ``d1 < ratio * d2``. When several queries keep the same target, only
    the closest one survives (lowest query index on ties).
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if len(da) == 0 or len(db) < 2:
        return MatchSet.from_pairs([])
    dist = descriptor_distances(da, db)
    order = np.argsort(dist, axis=1, kind="stable")
    rows = np.arange(len(dist))
    d1 = dist[rows, order[:, 0]]
    d2 = dist[rows, order[:, 1]]
    best = {}
    for i in np.flatnonzero(d1 < ratio * d2):
        j = int(order[i, 0])
        if j not in best or d1[i] < best[j][1]:
            best[j] = (int(i), float(d1[i]))
    return MatchSet.from_pairs([(i, j, d) for j, (i, d) in best.items()])


def match_cross_check(da, db) -> MatchSet:
    """Mutual nearest neighbours; ties go to the lowest index."""
    if len(da) == 0 or len(db) == 0:
        return MatchSet.from_pairs([])
    dist = descriptor_distances(da, db)
    a_to_b = np.argmin(dist, axis=1)
    b_to_a = np.argmin(dist, axis=0)
    return MatchSet.from_pairs([(int(i), int(j), float(dist[i, j]))
                                for i, j in enumerate(a_to_b) if b_to_a[j] == i])


def write_keypoints(path, kps: KeypointSet) -> None:
    """One line per keypoint: ``id x y scale``."""
    lines = [f"{i} {x:.4f} {y:.4f} {s:.4f}" for i, ((x, y), s) in enumerate(zip(kps.points, kps.scales))]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_matches(path, matches: MatchSet) -> None:
    lines = [f"{a} {b} {d:.6g}" for a, b, d in matches.pairs()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
