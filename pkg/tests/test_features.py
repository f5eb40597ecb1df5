import numpy as np
import pytest

from dielink import features as ft

from .helpers import blob, textured


def _rot90_points(pts, width):
    # np.rot90 (counter-clockwise): pixel (x, y) moves to (y, width - 1 - x)
    return np.c_[pts[:, 1], width - 1 - pts[:, 0]]


# --- detection -------------------------------------------------------------

def test_sift_constant_image_has_no_keypoints():
    kps, desc = ft.sift_detect_describe(np.full((64, 64), 128.0))
    assert len(kps) == 0 and desc.shape == (0, 128)
    assert len(ft.detect_keypoints_baseline(np.full((64, 64), 128.0))) == 0


def test_sift_rotated_copy_descriptors_match():
    img = textured((96, 96), seed=5, smooth=2.0)
    k1, d1 = ft.sift_detect_describe(img)
    k2, d2 = ft.sift_detect_describe(np.rot90(img).copy())
    dist = ft.descriptor_distances(d1, d2)
    mapped = _rot90_points(k1.points, img.shape[1])
    best = []
    for i, p in enumerate(mapped):
        near = np.hypot(*(k2.points - p).T) < 1.0
        if near.any():
            best.append(dist[i, near].min())
    assert len(best) >= len(k1) // 2
    # corresponding points are an order of magnitude closer than unrelated ones
    assert np.median(best) < 0.15 * np.median(dist)


@pytest.mark.parametrize("detector", ["sift", "baseline"])
def test_blob_detected_near_center(detector):
    img = blob((64, 64), (40.0, 25.0), 3.0)
    if detector == "sift":
        kps, _ = ft.sift_detect_describe(img)
    else:
        kps = ft.detect_keypoints_baseline(img)
    assert len(kps) > 0
    assert np.hypot(*(kps.points - [40.0, 25.0]).T).min() <= 2.0


def test_baseline_rotated_copy_repeats_keypoints():
    img = textured((96, 96), seed=6, smooth=2.0)
    k1 = ft.detect_keypoints_baseline(img)
    k2 = ft.detect_keypoints_baseline(np.rot90(img).copy())
    mapped = _rot90_points(k1.points, 96)
    hits = sum(np.hypot(*(k2.points - p).T).min() < 1.0 for p in mapped)
    assert hits >= len(k1) // 2


def test_detection_order_and_determinism():
    img = textured((80, 80), seed=7)
    k1, d1 = ft.sift_detect_describe(img)
    k2, d2 = ft.sift_detect_describe(img)
    np.testing.assert_array_equal(k1.points, k2.points)
    np.testing.assert_array_equal(d1, d2)
    assert np.all(np.diff(k1.responses) <= 0)
    base = ft.detect_keypoints_baseline(img)
    assert len(np.unique(base.points, axis=0)) == len(base)
    h, w = img.shape
    assert np.all((k1.points >= 0) & (k1.points < [w, h]))


# --- ORB -------------------------------------------------------------------

def test_orb_deterministic_and_self_distance_zero():
    img = textured((96, 96), seed=8)
    kps = ft.detect_keypoints_baseline(img)
    ka, da = ft.orb_describe(img, kps)
    kb, db = ft.orb_describe(img, kps)
    assert da.shape[1] == 32 and da.dtype == np.uint8
    np.testing.assert_array_equal(da, db)
    np.testing.assert_array_equal(ka.points, kb.points)
    assert np.all(np.diag(ft.descriptor_distances(da, da)) == 0)


def test_orb_drops_border_keypoints_and_stays_aligned():
    img = textured((96, 96), seed=8)
    kps = ft.KeypointSet.from_points([[5, 5], [48, 48], [90, 50], [40, 60]])
    kept, desc = ft.orb_describe(img, kps)
    assert len(kept) == len(desc) == 2
    np.testing.assert_array_equal(kept.points, [[48, 48], [40, 60]])


def test_orb_inverted_patch_far_in_hamming():
    img = textured((96, 96), seed=9)
    kps = ft.KeypointSet.from_points([[48, 48]])
    _, d1 = ft.orb_describe(img, kps)
    _, d2 = ft.orb_describe(255.0 - img, kps)
    assert ft.descriptor_distances(d1, d2)[0, 0] > 128


def test_hamming_matches_bit_count(rng):
    a = rng.integers(0, 256, (5, 32), dtype=np.uint8)
    b = rng.integers(0, 256, (4, 32), dtype=np.uint8)
    d = ft.descriptor_distances(a, b)
    for i in range(5):
        for j in range(4):
            assert d[i, j] == sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(a[i], b[j]))


# --- matching --------------------------------------------------------------

def _ratio_oracle(da, db, ratio):
    best = {}
    for i in range(len(da)):
        ds = sorted((float(np.linalg.norm(da[i] - db[j])), j) for j in range(len(db)))
        (d1, j1), (d2, _) = ds[0], ds[1]
        if d1 < ratio * d2:
            if j1 not in best or d1 < best[j1][1] or (d1 == best[j1][1] and i < best[j1][0]):
                best[j1] = (i, d1)
    return sorted((i, j) for j, (i, _) in best.items())


def test_ratio_identity_on_separated_vectors():
    d = np.eye(6, dtype=np.float32) * 10
    m = ft.match_ratio_test(d, d)
    assert [(a, b) for a, b, _ in m.pairs()] == [(i, i) for i in range(6)]


def test_ratio_rejects_ambiguous_query():
    q = np.array([[1.0, 0.0, 0.0]])
    db = np.array([[1.0, 0.01, 0.0], [1.0, -0.01, 0.0], [-5.0, 0.0, 0.0]])
    assert len(ft.match_ratio_test(q, db)) == 0


def test_ratio_matches_exhaustive_oracle():
    for seed in range(20):
        r = np.random.default_rng(seed)
        da, db = r.normal(size=(10, 8)), r.normal(size=(10, 8))
        db[:4] = da[:4] + r.normal(scale=0.05, size=(4, 8))
        m = ft.match_ratio_test(da, db, 0.75)
        assert [(a, b) for a, b, _ in m.pairs()] == _ratio_oracle(da, db, 0.75)


def test_ratio_edge_cases():
    assert len(ft.match_ratio_test(np.ones((3, 4)), np.ones((1, 4)))) == 0
    with pytest.raises(ValueError):
        ft.match_ratio_test(np.ones((3, 4)), np.ones((3, 4)), ratio=1.0)


def test_cross_check_identity_and_swap():
    d = np.eye(4) * 3
    assert [(a, b) for a, b, _ in ft.match_cross_check(d, d).pairs()] == [(i, i) for i in range(4)]
    a = np.array([[0.0, 0.0], [10.0, 10.0]])
    m = ft.match_cross_check(a, a[::-1])
    assert [(x, y) for x, y, _ in m.pairs()] == [(0, 1), (1, 0)]


def test_cross_check_matches_mutual_nn_oracle():
    for seed in range(20):
        r = np.random.default_rng(seed)
        da = r.integers(0, 256, (12, 32), dtype=np.uint8)
        db = r.integers(0, 256, (9, 32), dtype=np.uint8)
        db[:5] = da[:5] ^ (r.random((5, 32)) < 0.05).astype(np.uint8)
        dist = [[sum(bin(int(x) ^ int(y)).count("1") for x, y in zip(p, q)) for q in db] for p in da]
        nn_a = [min(range(len(db)), key=lambda j: (dist[i][j], j)) for i in range(len(da))]
        nn_b = [min(range(len(da)), key=lambda i: (dist[i][j], i)) for j in range(len(db))]
        expected = [(i, j) for i, j in enumerate(nn_a) if nn_b[j] == i]
        m = ft.match_cross_check(da, db)
        assert [(a, b) for a, b, _ in m.pairs()] == expected
        # symmetry and size bound
        swapped = sorted((b, a) for a, b, _ in ft.match_cross_check(db, da).pairs())
        assert swapped == expected
        assert len(m) <= min(len(da), len(db))


def test_cross_check_empty():
    assert len(ft.match_cross_check(np.zeros((0, 32), np.uint8), np.zeros((3, 32), np.uint8))) == 0


def test_debug_exports(tmp_path):
    kps = ft.KeypointSet.from_points([[1, 2], [3.5, 4]], scale=2.0)
    ft.write_keypoints(tmp_path / "k.txt", kps)
    assert (tmp_path / "k.txt").read_text().splitlines() == [
        "0 1.0000 2.0000 2.0000", "1 3.5000 4.0000 2.0000"]
    ft.write_matches(tmp_path / "m.txt", ft.MatchSet.from_pairs([(1, 0, 3.0)]))
    assert (tmp_path / "m.txt").read_text() == "1 0 3\n"
