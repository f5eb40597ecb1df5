import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dielink import geometry as geo
from dielink.geometry import EstimationError, SimilarityTransform

from .helpers import textured
from .oracles import procrustes_grid


def _forward(pts, s, theta, t):
    c, sn = math.cos(theta), math.sin(theta)
    R = np.array([[c, -sn], [sn, c]])
    return s * pts @ R.T + np.asarray(t)


# --- similarity estimation ---------------------------------------------------

def test_similarity_identity(rng):
    pts = rng.uniform(0, 100, (10, 2))
    t = geo.estimate_similarity(pts, pts)
    assert t.s == pytest.approx(1, abs=1e-12) and t.theta == pytest.approx(0, abs=1e-12)
    assert t.tx == pytest.approx(0, abs=1e-9) and t.ty == pytest.approx(0, abs=1e-9)


def test_similarity_recovers_known_transform(rng):
    pts = rng.uniform(-50, 50, (10, 2))
    t = geo.estimate_similarity(pts, _forward(pts, 1.2, math.radians(30), (5, -3)))
    assert (t.s, t.theta, t.tx, t.ty) == pytest.approx((1.2, math.radians(30), 5, -3), abs=1e-9)


def test_similarity_robust_ignores_gross_outliers(rng):
    pts = rng.uniform(0, 200, (50, 2))
    dst = _forward(pts, 0.9, 0.4, (12, 7))
    clean = geo.estimate_similarity(pts, dst)
    bad = rng.choice(50, 10, replace=False)
    dst[bad] += rng.uniform(40, 80, (10, 2)) * rng.choice([-1, 1], (10, 2))
    robust = geo.estimate_similarity(pts, dst, robust=True, seed=3)
    for p in ("s", "theta", "tx", "ty"):
        assert getattr(robust, p) == pytest.approx(getattr(clean, p), abs=1e-3)
    # the plain fit is pulled away by the outliers
    plain = geo.estimate_similarity(pts, dst)
    assert abs(plain.tx - clean.tx) > 1e-3 or abs(plain.ty - clean.ty) > 1e-3


def test_similarity_degenerate_inputs():
    with pytest.raises(EstimationError):
        geo.estimate_similarity([[0, 0], [1, 1]], [[0, 0], [1, 1]])
    with pytest.raises(EstimationError):
        geo.estimate_similarity([[0, 0], [1, 1], [2, 2], [3, 3]], [[0, 0], [1, 1], [2, 2], [3, 3]])
    with pytest.raises(EstimationError):
        geo.estimate_similarity([[5, 5]] * 4, [[1, 2]] * 4)


def test_robust_similarity_reproducible(rng):
    pts = rng.uniform(0, 100, (30, 2))
    dst = _forward(pts, 1.1, -0.2, (3, 4)) + rng.normal(0, 0.5, (30, 2))
    dst[:6] = rng.uniform(0, 100, (6, 2))
    a = geo.estimate_similarity(pts, dst, robust=True, seed=11)
    b = geo.estimate_similarity(pts, dst, robust=True, seed=11)
    assert a == b


def test_transform_inverse_roundtrip(rng):
    t = SimilarityTransform(1.3, 0.7, -4.0, 9.0)
    pts = rng.uniform(0, 50, (5, 2))
    np.testing.assert_allclose(t.inverse()(t(pts)), pts, atol=1e-12)
    with pytest.raises(ValueError):
        SimilarityTransform(s=0.0)


# --- image warping -----------------------------------------------------------

def test_apply_identity_unchanged(rng):
    img = rng.uniform(0, 255, (20, 30))
    np.testing.assert_array_equal(geo.apply_similarity(img, SimilarityTransform.identity()), img)


def test_apply_quarter_turn_on_symmetric_cross():
    img = np.zeros((21, 21))
    img[10, 4:17] = 200.0
    img[4:17, 10] = 200.0
    t = SimilarityTransform.about((10.0, 10.0), math.pi / 2)
    np.testing.assert_allclose(geo.apply_similarity(img, t), img, atol=1e-9)


def test_apply_quarter_turn_moves_pixels_as_expected():
    img = np.zeros((11, 11))
    img[5, 8] = 100.0  # pixel (x=8, y=5), right of center
    out = geo.apply_similarity(img, SimilarityTransform.about((5.0, 5.0), math.pi / 2))
    # counter-clockwise in (x, y) with y down: (8, 5) -> (5, 8)
    assert out[8, 5] == pytest.approx(100.0, abs=1e-9)


def test_apply_forward_then_inverse_close():
    img = textured((80, 80), seed=1, smooth=3.0)
    t = SimilarityTransform.about((39.5, 39.5), math.radians(17), 1.1)
    back = geo.apply_similarity(geo.apply_similarity(img, t), t.inverse())
    ys, xs = np.indices(img.shape)
    inner = (xs - 39.5) ** 2 + (ys - 39.5) ** 2 <= 30 ** 2
    assert np.abs(back - img)[inner].mean() < 0.02 * 255


# --- scale gate --------------------------------------------------------------

@pytest.mark.parametrize("s,gated", [(1.30, True), (1.0, False), (0.76, False), (0.74, True),
                                     (1.24, False), (1.26, True)])
def test_scale_gate(s, gated):
    t = SimilarityTransform(s, 0.3, 4.0, -2.0)
    diag = {}
    out = geo.scale_gate(t, 0.25, diag)
    assert diag["gate_triggered"] is gated
    assert out == (SimilarityTransform.identity() if gated else t)


# --- homography --------------------------------------------------------------

def test_homography_identity(rng):
    pts = rng.uniform(0, 100, (12, 2))
    h = geo.estimate_homography_ransac(pts, pts)
    np.testing.assert_allclose(h.H, np.eye(3), atol=1e-9)
    assert h.n_in == 12


def test_homography_recovers_map_with_outliers(rng):
    H = np.array([[1.05, 0.08, 12.0], [-0.06, 0.97, -7.0], [2e-4, -1e-4, 1.0]])
    pts = rng.uniform(0, 300, (60, 2))
    dst = geo.apply_homography(pts, H)
    out_idx = rng.choice(60, 18, replace=False)
    dst[out_idx] += rng.uniform(30, 60, (18, 2)) * rng.choice([-1, 1], (18, 2))
    h = geo.estimate_homography_ransac(pts, dst, 3.0, seed=5)
    inl = np.setdiff1d(np.arange(60), out_idx)
    assert set(np.flatnonzero(h.inlier_mask)) == set(inl)
    np.testing.assert_allclose(geo.apply_homography(pts[inl], h.H), dst[inl], atol=1e-6)
    assert h.H[2, 2] == 1.0


def test_homography_degenerate():
    line = np.c_[np.arange(8.0), 2 * np.arange(8.0)]
    with pytest.raises(EstimationError):
        geo.estimate_homography_ransac(line, line + 1)
    with pytest.raises(EstimationError):
        geo.estimate_homography_ransac(line[:3], line[:3])


def test_homography_seed_reproducible(rng):
    pts = rng.uniform(0, 100, (30, 2))
    dst = pts + rng.normal(0, 1.0, (30, 2))
    dst[:8] = rng.uniform(0, 100, (8, 2))
    a = geo.estimate_homography_ransac(pts, dst, seed=9)
    b = geo.estimate_homography_ransac(pts, dst, seed=9)
    np.testing.assert_array_equal(a.H, b.H)
    np.testing.assert_array_equal(a.inlier_mask, b.inlier_mask)


def test_apply_homography(rng):
    pts = rng.uniform(0, 50, (7, 2))
    np.testing.assert_array_equal(geo.apply_homography(pts, np.eye(3)), pts)
    T = np.array([[1, 0, 3.0], [0, 1, -2.0], [0, 0, 1]])
    np.testing.assert_allclose(geo.apply_homography(pts, T), pts + [3, -2])
    H = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    manual = []
    for x, y in pts:
        u, v, w = H @ np.array([x, y, 1.0])
        manual.append((u / w, v / w))
    np.testing.assert_allclose(geo.apply_homography(pts, H), manual, rtol=1e-12)
    with pytest.raises(EstimationError):
        geo.apply_homography([[1.0, 1.0]], np.array([[1, 0, 0], [0, 1, 0], [1, 0, -1.0]]))


# --- standardization and Procrustes -----------------------------------------

def test_standardize_hand_case():
    h = 1 / math.sqrt(2)
    np.testing.assert_allclose(geo.standardize([[0, 0], [2, 0]]), [[-h, 0], [h, 0]], atol=1e-15)


def test_standardize_invariants(rng):
    pts = rng.uniform(-10, 30, (9, 2))
    z = geo.standardize(pts)
    assert np.abs(z.sum(0)).max() < 1e-9 * len(pts)
    assert np.linalg.norm(z) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(geo.standardize(z), z, atol=1e-15)
    np.testing.assert_allclose(geo.standardize(pts + [100, -40]), z, atol=1e-12)
    with pytest.raises(EstimationError):
        geo.standardize([[3, 3], [3, 3], [3, 3]])


def test_procrustes_rotation_and_similarity_are_zero(rng):
    a = rng.uniform(0, 10, (8, 2))
    assert geo.procrustes_distance(a, _forward(a, 1.0, 1.1, (0, 0))) == pytest.approx(0, abs=1e-12)
    assert geo.procrustes_distance(a, 3 * a + 7) == pytest.approx(0, abs=1e-12)
    assert geo.procrustes_distance(a, a * [-1, 1]) == pytest.approx(0, abs=1e-12)  # reflection


def test_procrustes_matches_grid_oracle():
    for seed in range(8):
        r = np.random.default_rng(seed)
        a, b = r.uniform(0, 10, (6, 2)), r.uniform(0, 10, (6, 2))
        assert geo.procrustes_distance(a, b) == pytest.approx(procrustes_grid(a, b), abs=1e-6)


def test_procrustes_errors():
    with pytest.raises(ValueError):
        geo.procrustes_distance(np.eye(2), np.ones((3, 2)) * np.arange(3)[:, None])
    with pytest.raises(EstimationError):
        geo.procrustes_distance([[1, 1], [1, 1]], [[0, 0], [1, 0]])


point_sets = arrays(np.float64, (6, 2), elements=st.floats(-100, 100, allow_nan=False))


def _spread(p):
    return np.linalg.svd(p - p.mean(0), compute_uv=False).min() > 1e-2


@settings(max_examples=60, deadline=None)
@given(point_sets, point_sets, st.floats(0.2, 5), st.floats(-math.pi, math.pi),
       st.booleans(), st.floats(-50, 50), st.floats(-50, 50))
def test_procrustes_properties(a, b, s, theta, flip, tx, ty):
    if not (_spread(a) and _spread(b)):
        return
    d = geo.procrustes_distance(a, b)
    assert 0.0 <= d <= 2.0
    assert geo.procrustes_distance(b, a) == pytest.approx(d, abs=1e-9)
    a2 = _forward(a * ([-1, 1] if flip else [1, 1]), s, theta, (tx, ty))
    assert geo.procrustes_distance(a2, b) == pytest.approx(d, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.8, 1.2), st.floats(-math.pi + 1e-6, math.pi - 1e-6),
       st.floats(-100, 100), st.floats(-100, 100), st.integers(0, 2 ** 31))
def test_similarity_recovery_property(s, theta, tx, ty, seed):
    pts = np.random.default_rng(seed).uniform(-100, 100, (8, 2))
    t = geo.estimate_similarity(pts, _forward(pts, s, theta, (tx, ty)))
    assert (t.s, t.theta, t.tx, t.ty) == pytest.approx((s, theta, tx, ty), abs=1e-9)
