"""First-frame object filters and averaged background context filters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imagecore import BoundingBox, normalize_rows, patch_matrix, warp_regions


class InsufficientDataError(ValueError):
    pass


class InvalidGeometryError(ValueError):
    pass


@dataclass
class KMeansResult:
    centroids: np.ndarray  # (d, dim)
    assignments: np.ndarray  # (num_points,)
    inertia: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


@dataclass(frozen=True)
class FilterBank:
    """``d`` object filters and ``d`` index-aligned background filters.

    Both arrays have shape ``(d, w, w)``.
    """

    object_filters: np.ndarray
    background_filters: np.ndarray

    def __post_init__(self):
        if self.object_filters.shape != self.background_filters.shape:
            raise ValueError(
                f"object/background filter shapes differ: "
                f"{self.object_filters.shape} vs {self.background_filters.shape}"
            )
        if self.object_filters.ndim != 3 or self.object_filters.shape[1] != self.object_filters.shape[2]:
            raise ValueError(f"filters must be (d, w, w), got {self.object_filters.shape}")

    @property
    def d(self) -> int:
        return self.object_filters.shape[0]

    @property
    def w(self) -> int:
        return self.object_filters.shape[1]

    def difference_filters(self) -> np.ndarray:
        return self.object_filters - self.background_filters

    def with_background(self, background: np.ndarray) -> "FilterBank":
        return FilterBank(self.object_filters, np.asarray(background, dtype=np.float64))


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeanspp(points: np.ndarray, k: int, rngs: list[np.random.Generator]) -> np.ndarray:
    """k-means++ seeding for a ``(B, num, dim)`` batch, one generator per item."""
    batch, num, _ = points.shape
    rows = np.arange(batch)
    sq_norms = np.einsum("bij,bij->bi", points, points)
    chosen = np.empty((batch, k), dtype=np.intp)
    chosen[:, 0] = [rng.integers(num) for rng in rngs]

    def dist_to(idx):
        centre = points[rows, idx]
        cross = np.matmul(points, centre[:, :, None])[:, :, 0]
        return np.maximum(sq_norms - 2.0 * cross + sq_norms[rows, idx][:, None], 0.0)

    closest = dist_to(chosen[:, 0])
    for j in range(1, k):
        cum = np.cumsum(closest, axis=1)
        total = cum[:, -1]
        if np.all(total > 0.0):
            targets = np.array([rng.random() for rng in rngs]) * total
            chosen[:, j] = np.minimum(np.sum(cum <= targets[:, None], axis=1), num - 1)
        else:
            for b, rng in enumerate(rngs):
                if total[b] <= 0.0:
                    # every point coincides with a chosen centre; fall back to uniform
                    chosen[b, j] = rng.integers(num)
                else:
                    target = rng.random() * total[b]
                    chosen[b, j] = min(int(np.searchsorted(cum[b], target, side="right")), num - 1)
        np.minimum(closest, dist_to(chosen[:, j]), out=closest)
    return points[rows[:, None], chosen].copy()


def _assign(points, centroids):
    rows = np.arange(points.shape[0])[:, None]
    dists = np.matmul(points, centroids.transpose(0, 2, 1))
    dists *= -2.0
    dists += np.einsum("bkj,bkj->bk", centroids, centroids)[:, None, :]
    labels = np.argmin(dists, axis=2)
    resid = points - centroids[rows, labels]
    return labels, np.einsum("bij,bij->bi", resid, resid)


def _cluster_means(points, labels, centroids):
    """Mean of each cluster; empty clusters keep their old centroid and are flagged."""
    nb, num, dim = points.shape
    d = centroids.shape[1]
    keys = (labels + d * np.arange(nb)[:, None]).ravel()
    order = np.argsort(keys, kind="stable")
    present, starts, counts = np.unique(keys[order], return_index=True, return_counts=True)
    sums = np.add.reduceat(points.reshape(-1, dim)[order], starts, axis=0)
    out = centroids.reshape(-1, dim).copy()
    out[present] = sums / counts[:, None]
    filled = np.zeros(nb * d, dtype=bool)
    filled[present] = True
    return out.reshape(nb, d, dim), filled.reshape(nb, d)


def kmeans_batch(batch, d: int, seeds, max_iters: int = 100) -> list[KMeansResult]:
    """Run independent k-means problems of equal size in lockstep.

    Items that have converged sit at a Lloyd fixed point, so carrying them
    along until the slowest item finishes leaves their result unchanged:
    every item matches a standalone :func:`kmeans_cluster` call.
    """
    points = np.asarray(batch, dtype=np.float64)
    points = points.reshape(points.shape[0], points.shape[1], -1)
    nb, num, _ = points.shape
    if d < 1:
        raise ValueError(f"cluster count must be positive, got {d}")
    if num < d:
        raise InsufficientDataError(f"{num} patches cannot form {d} clusters")

    rngs = [np.random.default_rng(s) for s in seeds]
    centroids = _kmeanspp(points, d, rngs)
    labels, per_point = _assign(points, centroids)
    histories = [[float(v)] for v in per_point.sum(axis=1)]
    active = np.ones(nb, dtype=bool)
    n_iter = np.zeros(nb, dtype=int)
    for _ in range(max_iters):
        centroids, filled = _cluster_means(points, labels, centroids)
        for b in np.flatnonzero(~filled.all(axis=1)):
            far = np.argsort(per_point[b], kind="stable")[::-1]
            for cluster, idx in zip(np.flatnonzero(~filled[b]), far):
                centroids[b, cluster] = points[b, idx]
        new_labels, per_point = _assign(points, centroids)
        for b in np.flatnonzero(active):
            histories[b].append(float(per_point[b].sum()))
            n_iter[b] += 1
        done = np.all(new_labels == labels, axis=1)
        labels = new_labels
        active &= ~done
        if not active.any():
            break

    return [
        KMeansResult(centroids[b].copy(), labels[b].copy(), histories[b][-1], histories[b], int(n_iter[b]))
        for b in range(nb)
    ]


def kmeans_cluster(patches, d: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding.

    ``patches`` may be ``(num, w, w)`` or ``(num, w*w)``.  Stops when the
    assignments no longer change or after ``max_iters`` update steps.  An
    empty cluster receives the point currently farthest from its centroid.
    """
    arr = np.asarray(patches, dtype=np.float64)
    return kmeans_batch(arr.reshape(1, arr.shape[0], -1), d, [seed], max_iters)[0]


def select_filters(patches, km: KMeansResult) -> np.ndarray:
    """For every centroid, the input patch closest to it (lowest index on ties)."""
    arr = np.asarray(patches, dtype=np.float64)
    flat = arr.reshape(arr.shape[0], -1)
    nearest = np.argmin(_sq_dists(flat, km.centroids), axis=0)
    return arr[nearest].copy()


def learn_filters(img: np.ndarray, d: int, w: int, seed: int = 0, max_iters: int = 100) -> np.ndarray:
    """k-means filters of one warped ``n x n`` image, shape ``(d, w, w)``."""
    patches = normalize_rows(patch_matrix(img, w)[0])
    km = kmeans_cluster(patches, d, seed=seed, max_iters=max_iters)
    return select_filters(patches, km).reshape(d, w, w)


def random_filters(img: np.ndarray, d: int, w: int, seed: int = 0) -> np.ndarray:
    """``d`` distinct normalized patches of ``img`` drawn uniformly at random."""
    patches = normalize_rows(patch_matrix(img, w)[0])
    if patches.shape[0] < d:
        raise InsufficientDataError(f"{patches.shape[0]} patches cannot supply {d} filters")
    idx = np.random.default_rng(seed).choice(patches.shape[0], size=d, replace=False)
    return patches[idx].reshape(d, w, w)


def sample_background_boxes(target: BoundingBox, frame_w: float, frame_h: float, m: int) -> list[BoundingBox]:
    """``m`` target-sized boxes on a circle of radius ``max(w, h)`` around the target.

    Angles start at 0 (the +x direction) and are evenly spaced.  Each box
    is shifted, never resized, so that it lies inside the frame.
    """
    if m < 1:
        raise ValueError(f"need at least one background sample, got m={m}")
    if target.w > frame_w or target.h > frame_h:
        raise InvalidGeometryError(
            f"target {target.w}x{target.h} does not fit in frame {frame_w}x{frame_h}"
        )
    radius = max(target.w, target.h)
    boxes = []
    for j in range(m):
        theta = 2.0 * np.pi * j / m
        cx = target.cx + radius * np.cos(theta)
        cy = target.cy + radius * np.sin(theta)
        x = min(max(cx - target.w / 2.0, 0.0), frame_w - target.w)
        y = min(max(cy - target.h / 2.0, 0.0), frame_h - target.h)
        boxes.append(BoundingBox(float(x), float(y), target.w, target.h))
    return boxes


def build_background_filters(
    frame: np.ndarray,
    boxes: list[BoundingBox],
    d: int,
    w: int,
    n: int,
    seed: int = 0,
    max_iters: int = 100,
    random: bool = False,
) -> np.ndarray:
    """Average-pooled background filters, shape ``(d, w, w)``.

    Filters are learned independently per sample box (all with the same
    seed) and averaged index by index, so filter ``i`` of the result is the
    mean of every sample's ``i``-th selected filter.  With ``random=True``
    each sample supplies randomly drawn patches instead of k-means filters.
    """
    if not boxes:
        raise ValueError("no background boxes given")
    warped = warp_regions(frame, np.array([b.as_tuple() for b in boxes]), n)
    if random:
        total = sum(random_filters(img, d, w, seed=seed) for img in warped)
        return total / len(boxes)
    patches = normalize_rows(patch_matrix(warped, w))
    results = kmeans_batch(patches, d, [seed] * len(boxes), max_iters=max_iters)
    total = np.zeros((d, w, w))
    for sample, km in zip(patches, results):
        total += select_filters(sample, km).reshape(d, w, w)
    return total / len(boxes)
