"""2-D transform estimation and the Procrustes distance between point sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage


class EstimationError(RuntimeError):
    """A transform could not be estimated from the given correspondences."""


@dataclass(frozen=True)
class SimilarityTransform:
    """``p -> s * R(theta) @ p + (tx, ty)`` in pixel ``(x, y)`` coordinates."""

    s: float = 1.0
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.s, self.theta, self.tx, self.ty)):
            raise ValueError("transform parameters must be finite")
        if self.s <= 0:
            raise ValueError("scale must be positive")

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def about(cls, center, theta: float, s: float = 1.0):
        """Rotate by ``theta`` and scale by ``s`` around ``center``."""
        c = np.asarray(center, dtype=np.float64)
        t = c - s * _rot(theta) @ c
        return cls(s, theta, float(t[0]), float(t[1]))

    @property
    def linear(self) -> np.ndarray:
        return self.s * _rot(self.theta)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.linear.T + self.translation

    def inverse(self) -> "SimilarityTransform":
        s = 1.0 / self.s
        t = -(s * _rot(-self.theta)) @ self.translation
        return SimilarityTransform(s, -self.theta, float(t[0]), float(t[1]))

    def is_identity(self, atol: float = 1e-9) -> bool:
        return (abs(self.s - 1) <= atol and abs(self.theta) <= atol
                and abs(self.tx) <= atol and abs(self.ty) <= atol)


def _rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _as_pairs(pts_a, pts_b):
    a = np.asarray(pts_a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(pts_b, dtype=np.float64).reshape(-1, 2)
    if a.shape != b.shape:
        raise ValueError("point lists must have the same length")
    return a, b


def _similarity_lsq(a, b) -> SimilarityTransform:
    ca, cb = a.mean(0), b.mean(0)
    a0, b0 = a - ca, b - cb
    var_a = (a0 * a0).sum()
    sv = np.linalg.svd(a0, compute_uv=False)
    if var_a <= 1e-18 or sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise EstimationError("degenerate (coincident or collinear) points")
    cov = b0.T @ a0
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[1] = -1.0
    r = (u * sign) @ vt
    s = float((d * sign).sum() / var_a)
    if s <= 0:
        raise EstimationError("non-positive scale")
    t = cb - s * r @ ca
    return SimilarityTransform(s, math.atan2(r[1, 0], r[0, 0]), float(t[0]), float(t[1]))


def estimate_similarity(pts_a, pts_b, robust: bool = False, reproj_thresh: float = 3.0,
                        max_iters: int = 2000, confidence: float = 0.995,
                        seed: int = 42) -> SimilarityTransform:
    """Least-squares similarity mapping ``pts_a`` onto ``pts_b``.

    The plain mode is the closed-form centroid + SVD solution (rotations
    only, no reflections). ``robust=True`` first runs RANSAC on two-point
    samples and then refits on the consensus set.
    """
    a, b = _as_pairs(pts_a, pts_b)
    if len(a) < 3:
        raise EstimationError("need at least 3 correspondences")
    if not robust:
        return _similarity_lsq(a, b)

    rng = np.random.default_rng(seed)
    n = len(a)
    best_mask = None
    best_count = 0
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        i, j = rng.choice(n, size=2, replace=False)
        da, db = a[j] - a[i], b[j] - b[i]
        na, nb = np.hypot(*da), np.hypot(*db)
        if na < 1e-9 or nb < 1e-9:
            continue
        s = nb / na
        theta = math.atan2(db[1], db[0]) - math.atan2(da[1], da[0])
        lin = s * _rot(theta)
        t = b[i] - lin @ a[i]
        err = np.hypot(*(a @ lin.T + t - b).T)
        mask = err <= reproj_thresh
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count = mask, count
            w = count / n
            needed = _ransac_iterations(w, 2, confidence, max_iters)
    if best_mask is None or best_count < 3:
        raise EstimationError("no consensus set of at least 3 points")
    return _similarity_lsq(a[best_mask], b[best_mask])


def _ransac_iterations(inlier_ratio, sample_size, confidence, cap):
    p_good = inlier_ratio ** sample_size
    if p_good >= 1.0:
        return 1
    if p_good <= 0.0:
        return cap
    return min(cap, int(math.ceil(math.log(1 - confidence) / math.log(1 - p_good))))


def apply_similarity(img, t: SimilarityTransform) -> np.ndarray:
    """Warp ``img`` by ``t`` onto a same-size canvas (bilinear, zero outside).

    Transforms within 1e-9 of the identity return an unchanged copy.
    """
    img = np.asarray(img, dtype=np.float64)
    if t.is_identity():
        return img.copy()
    inv = t.inverse()
    # ndimage works in (row, col) = (y, x): swap axes of the inverse map.
    lin = inv.linear[::-1, ::-1]
    off = inv.translation[::-1]
    return ndimage.affine_transform(img, lin, offset=off, order=1, mode="constant", cval=0.0)


def scale_gate(t: SimilarityTransform, tol: float = 0.25,
               diagnostics: Optional[dict] = None) -> SimilarityTransform:
    """Reject transforms whose scale is implausible: identity iff ``|s - 1| > tol``."""
    triggered = abs(t.s - 1.0) > tol
    if diagnostics is not None:
        diagnostics["gate_triggered"] = triggered
    return SimilarityTransform.identity() if triggered else t


# --------------------------------------------------------------------------
# Homography
# --------------------------------------------------------------------------

@dataclass
class Homography:
    H: np.ndarray
    inlier_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_in(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


def _normalizer(pts):
    c = pts.mean(0)
    d = np.sqrt(((pts - c) ** 2).sum(1)).mean()
    if d < 1e-12:
        return None
    k = math.sqrt(2) / d
    return np.array([[k, 0, -k * c[0]], [0, k, -k * c[1]], [0, 0, 1.0]])


def _dlt(a, b) -> Optional[np.ndarray]:
    ta, tb = _normalizer(a), _normalizer(b)
    if ta is None or tb is None:
        return None
    an = apply_homography(a, ta)
    bn = apply_homography(b, tb)
    n = len(a)
    x, y = an[:, 0], an[:, 1]
    u, v = bn[:, 0], bn[:, 1]
    one, zero = np.ones(n), np.zeros(n)
    rows = np.empty((2 * n, 9))
    rows[0::2] = np.column_stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u])
    rows[1::2] = np.column_stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v])
    _, sv, vt = np.linalg.svd(rows)
    if len(sv) >= 8 and sv[7] < 1e-10 * sv[0]:
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ hn @ ta
    if abs(h[2, 2]) < 1e-12:
        return None
    return h / h[2, 2]


def _collinear(p, q, r, eps=1e-6):
    return abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])) < eps


def _degenerate_sample(pts):
    return any(_collinear(pts[i], pts[j], pts[k])
               for i, j, k in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)))


def _transfer_error(h, a, b):
    q = np.c_[a, np.ones(len(a))] @ h.T
    w = q[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = q[:, :2] / w[:, None]
        err = np.hypot(*(proj - b).T)
    err[~np.isfinite(err) | (np.abs(w) < 1e-12)] = np.inf
    return err


def estimate_homography_ransac(pts_a, pts_b, reproj_thresh: float = 3.0, seed: int = 42,
                               max_iters: int = 2000, confidence: float = 0.995) -> Homography:
    """RANSAC homography mapping ``pts_a`` onto ``pts_b``.

    Minimal 4-point samples are solved with the normalized DLT; the model
    with the most inliers is refit on its inliers. Deterministic for a
    given ``seed``.
    """
    a, b = _as_pairs(pts_a, pts_b)
    n = len(a)
    if n < 4:
        raise EstimationError("need at least 4 correspondences")
    rng = np.random.default_rng(seed)
    best_h, best_mask, best_count = None, None, 0
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _degenerate_sample(a[idx]) or _degenerate_sample(b[idx]):
            continue
        h = _dlt(a[idx], b[idx])
        if h is None:
            continue
        mask = _transfer_error(h, a, b) <= reproj_thresh
        count = int(mask.sum())
        if count > best_count:
            best_h, best_mask, best_count = h, mask, count
            needed = _ransac_iterations(count / n, 4, confidence, max_iters)
    if best_h is None or best_count < 4:
        raise EstimationError("no homography with at least 4 inliers")

    refit = _dlt(a[best_mask], b[best_mask])
    if refit is not None:
        mask = _transfer_error(refit, a, b) <= reproj_thresh
        if mask.sum() >= best_count:
            best_h, best_mask = refit, mask
    return Homography(best_h, best_mask)


def apply_homography(pts, H) -> np.ndarray:
    """Project points through ``H`` (homogeneous coordinates, renormalized)."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    H = np.asarray(H, dtype=np.float64)
    q = np.c_[pts, np.ones(len(pts))] @ H.T
    w = q[:, 2]
    scale = np.abs(q).max(axis=1) if len(q) else w
    if np.any(np.abs(w) <= 1e-12 * np.maximum(scale, 1.0)):
        raise EstimationError("point mapped to infinity")
    return q[:, :2] / w[:, None]


# --------------------------------------------------------------------------
# Procrustes
# --------------------------------------------------------------------------

def standardize(pts) -> np.ndarray:
    """Center a point matrix and scale it to unit Frobenius norm."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise EstimationError("need at least 2 points")
    centered = pts - pts.mean(axis=0)
    norm = np.linalg.norm(centered)
    if norm <= 1e-12 * max(1.0, np.abs(pts).max()):
        raise EstimationError("all points coincide")
    return centered / norm


def procrustes_distance(ka, kb) -> float:
    """Minimal ``||A T - B||_F^2`` over ``T = s Q`` (Q orthogonal, s real).

    ``A`` and ``B`` are the standardized point matrices. With unit-norm
    inputs the optimum is ``1 - (sum of singular values of A^T B)^2``.
    """
    a = standardize(ka)
    b = standardize(kb)
    if a.shape != b.shape:
        raise ValueError("point sets must have the same length")
    nuclear = np.linalg.svd(a.T @ b, compute_uv=False).sum()
    return float(min(1.0, max(0.0, 1.0 - nuclear * nuclear)))
