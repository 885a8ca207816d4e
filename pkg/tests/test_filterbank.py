import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convtrack.filterbank import (
    FilterBank,
    InsufficientDataError,
    InvalidGeometryError,
    KMeansResult,
    build_background_filters,
    kmeans_batch,
    kmeans_cluster,
    learn_filters,
    random_filters,
    sample_background_boxes,
    select_filters,
)
from convtrack.imagecore import BoundingBox, normalize_rows, patch_matrix, warp_region


def _patches(rng, num=60, dim=36):
    return normalize_rows(rng.standard_normal((num, dim)))


class TestKMeans:
    def test_single_cluster_is_mean(self, rng):
        pts = _patches(rng)
        km = kmeans_cluster(pts, 1, seed=3)
        np.testing.assert_allclose(km.centroids[0], pts.mean(axis=0), atol=1e-12)
        np.testing.assert_array_equal(km.assignments, 0)

    def test_one_cluster_per_point(self, rng):
        pts = _patches(rng, num=12)
        km = kmeans_cluster(pts, 12, seed=0)
        assert km.inertia == pytest.approx(0.0, abs=1e-20)
        assert sorted(km.assignments) == list(range(12))

    def test_two_separated_clusters(self, rng):
        a = rng.normal(0, 0.05, (20, 4)) + [5, 0, 0, 0]
        b = rng.normal(0, 0.05, (15, 4)) - [5, 0, 0, 0]
        pts = np.vstack([a, b])
        truth = np.r_[np.zeros(20, int), np.ones(15, int)]
        # the construction really is well separated
        intra = max(np.ptp(a, axis=0).max(), np.ptp(b, axis=0).max()) * 2
        assert intra < np.min(np.linalg.norm(a[:, None] - b[None], axis=-1))
        km = kmeans_cluster(pts, 2, seed=7)
        labels = km.assignments
        assert np.array_equal(labels, truth) or np.array_equal(labels, 1 - truth)

    def test_too_few_points(self, rng):
        with pytest.raises(InsufficientDataError):
            kmeans_cluster(_patches(rng, num=5), 6)

    def test_deterministic(self, rng):
        pts = _patches(rng)
        a, b = kmeans_cluster(pts, 7, seed=11), kmeans_cluster(pts, 7, seed=11)
        np.testing.assert_array_equal(a.centroids, b.centroids)
        np.testing.assert_array_equal(a.assignments, b.assignments)

    @given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 20))
    def test_inertia_non_increasing(self, seed, d):
        rng = np.random.default_rng(seed)
        km = kmeans_cluster(_patches(rng, num=50, dim=9), d, seed=seed)
        hist = np.array(km.history)
        assert np.all(np.diff(hist) <= 1e-12 * hist[0])
        assert km.inertia == pytest.approx(hist[-1])

    @given(seed=st.integers(0, 2**32 - 1))
    def test_points_go_to_nearest_centroid(self, seed):
        rng = np.random.default_rng(seed)
        pts = _patches(rng, num=40, dim=9)
        km = kmeans_cluster(pts, 5, seed=seed)
        dists = np.linalg.norm(pts[:, None] - km.centroids[None], axis=-1)
        chosen = dists[np.arange(40), km.assignments]
        assert np.all(chosen <= dists.min(axis=1) + 1e-12)
        np.testing.assert_allclose(km.inertia, np.sum(chosen ** 2), rtol=1e-10)

    def test_duplicate_points_keep_all_clusters(self):
        pts = np.repeat(np.eye(3), [10, 1, 1], axis=0)
        km = kmeans_cluster(pts, 3, seed=0)
        assert len(np.unique(km.assignments)) == 3

    def test_batch_matches_single_runs(self, rng):
        batch = np.stack([_patches(rng, num=80) for _ in range(4)])
        seeds = [0, 1, 2, 0]
        for item, seed, res in zip(batch, seeds, kmeans_batch(batch, 9, seeds)):
            single = kmeans_cluster(item, 9, seed=seed)
            np.testing.assert_array_equal(res.assignments, single.assignments)
            np.testing.assert_allclose(res.centroids, single.centroids, atol=1e-12)
            assert res.n_iter == single.n_iter


class TestSelect:
    def test_single_patch(self, rng):
        p = _patches(rng, num=1)
        km = kmeans_cluster(p, 1)
        np.testing.assert_array_equal(select_filters(p, km), p)

    def test_centroids_on_patches(self, rng):
        pts = _patches(rng, num=10)
        km = KMeansResult(centroids=pts[[3, 7]].copy(), assignments=np.zeros(10, int), inertia=0.0)
        np.testing.assert_array_equal(select_filters(pts, km), pts[[3, 7]])

    def test_brute_force_nearest(self, rng):
        pts = _patches(rng, num=20)
        km = kmeans_cluster(pts, 3, seed=5)
        chosen = select_filters(pts, km)
        for c, f in zip(km.centroids, chosen):
            best = min(range(20), key=lambda i: (np.sum((pts[i] - c) ** 2), i))
            np.testing.assert_array_equal(f, pts[best])

    def test_ties_take_lowest_index(self):
        pts = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        km = KMeansResult(centroids=np.array([[1.0, 0.0]]), assignments=np.zeros(3, int), inertia=0.0)
        out = select_filters(pts, km)
        np.testing.assert_array_equal(out, [[1.0, 0.0]])

    def test_object_filters_are_patches(self, rng):
        img = rng.random((32, 32))
        filters = learn_filters(img, 20, 6, seed=2)
        rows = normalize_rows(patch_matrix(img, 6)[0])
        for f in filters.reshape(20, -1):
            assert np.any(np.all(rows == f, axis=1))

    def test_random_filters_are_distinct_patches(self, rng):
        img = rng.random((32, 32))
        filters = random_filters(img, 30, 6, seed=4).reshape(30, -1)
        rows = normalize_rows(patch_matrix(img, 6)[0])
        idx = [int(np.flatnonzero(np.all(rows == f, axis=1))[0]) for f in filters]
        assert len(set(idx)) == 30


class TestBackgroundBoxes:
    def test_four_compass_points(self):
        target = BoundingBox.from_center(100, 100, 10, 20)
        boxes = sample_background_boxes(target, 400, 400, 4)
        centers = np.array([(b.cx, b.cy) for b in boxes])
        np.testing.assert_allclose(centers, [[120, 100], [100, 120], [80, 100], [100, 80]], atol=1e-12)
        assert all((b.w, b.h) == (10, 20) for b in boxes)

    def test_single_sample(self):
        target = BoundingBox.from_center(50, 50, 8, 8)
        (box,) = sample_background_boxes(target, 200, 200, 1)
        assert (box.cx, box.cy) == (58, 50)

    @given(
        cx=st.floats(0, 1), cy=st.floats(0, 1), w=st.floats(1, 80), h=st.floats(1, 80), m=st.integers(1, 12)
    )
    def test_boxes_inside_frame(self, cx, cy, w, h, m):
        fw, fh = 100.0, 90.0
        target = BoundingBox(cx * (fw - w), cy * (fh - h), w, h)
        for b in sample_background_boxes(target, fw, fh, m):
            assert b.x >= 0 and b.y >= 0
            assert b.x + b.w <= fw + 1e-9 and b.y + b.h <= fh + 1e-9
            assert (b.w, b.h) == (w, h)

    def test_target_larger_than_frame(self):
        with pytest.raises(InvalidGeometryError):
            sample_background_boxes(BoundingBox(0, 0, 50, 10), 40, 40, 4)


class TestBackgroundFilters:
    def test_single_sample(self, rng):
        frame = rng.random((80, 80))
        box = BoundingBox(10, 12, 30, 30)
        out = build_background_filters(frame, [box], 8, 6, 32, seed=3)
        expected = learn_filters(warp_region(frame, box, 32), 8, 6, seed=3)
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_identical_samples(self, rng):
        frame = rng.random((80, 80))
        box = BoundingBox(10, 12, 30, 30)
        out = build_background_filters(frame, [box] * 3, 8, 6, 32, seed=3)
        single = build_background_filters(frame, [box], 8, 6, 32, seed=3)
        np.testing.assert_allclose(out, single, atol=1e-12)

    def test_two_samples_average(self, rng):
        frame = rng.random((80, 80))
        a, b = BoundingBox(0, 0, 30, 30), BoundingBox(40, 35, 30, 30)
        fa = learn_filters(warp_region(frame, a, 32), 8, 6, seed=1)
        fb = learn_filters(warp_region(frame, b, 32), 8, 6, seed=1)
        out = build_background_filters(frame, [a, b], 8, 6, 32, seed=1)
        np.testing.assert_allclose(out, (fa + fb) / 2, atol=1e-12)

    def test_random_variant(self, rng):
        frame = rng.random((80, 80))
        a, b = BoundingBox(0, 0, 30, 30), BoundingBox(40, 35, 30, 30)
        out = build_background_filters(frame, [a, b], 8, 6, 32, seed=1, random=True)
        fa = random_filters(warp_region(frame, a, 32), 8, 6, seed=1)
        fb = random_filters(warp_region(frame, b, 32), 8, 6, seed=1)
        np.testing.assert_allclose(out, (fa + fb) / 2, atol=1e-12)

    def test_empty(self, rng):
        with pytest.raises(ValueError):
            build_background_filters(rng.random((20, 20)), [], 4, 6, 16)


class TestFilterBank:
    def test_shapes_must_match(self):
        with pytest.raises(ValueError):
            FilterBank(np.zeros((3, 6, 6)), np.zeros((4, 6, 6)))

    def test_difference(self, rng):
        o, b = rng.random((2, 5, 6, 6))
        bank = FilterBank(o, b)
        assert (bank.d, bank.w) == (5, 6)
        np.testing.assert_array_equal(bank.difference_filters(), o - b)
