"""Grayscale images, axis-aligned region warping and sliding-window patches.

Images are plain 2D ``float64`` arrays indexed ``[row, col]`` with
intensities nominally in ``[0, 1]``.  Boxes live in continuous pixel
coordinates where pixel ``(r, c)`` covers ``[c, c+1) x [r, r+1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
NORM_EPS = 1e-12


class InvalidBoxError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box, ``(x, y)`` is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise InvalidBoxError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def to_gray(img) -> np.ndarray:
    """Convert an image to a single-channel float array.

    Accepts ``(H, W)`` (returned unchanged apart from dtype), ``(H, W, 3)``,
    or a sequence of three equally shaped channel planes.  Luminance uses
    the Rec. 601 weights ``0.299, 0.587, 0.114``.
    """
    if isinstance(img, (list, tuple)):
        shapes = {np.shape(ch) for ch in img}
        if len(img) != 3 or len(shapes) != 1:
            raise DimensionError(f"expected 3 equally sized channels, got shapes {sorted(shapes)}")
        img = np.stack([np.asarray(ch, dtype=np.float64) for ch in img], axis=-1)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        gray = arr
    elif arr.ndim == 3 and arr.shape[2] == 1:
        gray = arr[:, :, 0]
    elif arr.ndim == 3 and arr.shape[2] in (3, 4):
        r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
        gray = LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b
    else:
        raise DimensionError(f"cannot convert array of shape {arr.shape} to grayscale")
    if not np.all(np.isfinite(gray)):
        raise ValueError("image contains non-finite values")
    return np.ascontiguousarray(gray)


def _sample_axis(start, size, n: int, limit: int):
    # pixel-centre mapping: output i samples source coordinate start + (i + .5) * size / n - .5
    start = np.asarray(start, dtype=np.float64)[..., None]
    size = np.asarray(size, dtype=np.float64)[..., None]
    coords = start + (np.arange(n) + 0.5) * (size / n) - 0.5
    coords = np.clip(coords, 0.0, limit - 1)
    lo = np.floor(coords).astype(np.intp)
    frac = coords - lo
    hi = np.minimum(lo + 1, limit - 1)
    return lo, hi, frac


def warp_regions(frame: np.ndarray, boxes: np.ndarray, n: int) -> np.ndarray:
    """Bilinearly resample many boxes at once.

    ``boxes`` is a ``(K, 4)`` array of ``x, y, w, h`` rows; the result has
    shape ``(K, n, n)``.  Samples falling outside the frame take the value
    of the nearest edge pixel.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if n < 2:
        raise DimensionError(f"warp size must be >= 2, got {n}")
    if np.any(boxes[:, 2] <= 0) or np.any(boxes[:, 3] <= 0):
        raise InvalidBoxError("cannot warp a box with non-positive size")
    frame = np.ascontiguousarray(frame, dtype=np.float64)
    height, width = frame.shape
    x0, x1, fx = _sample_axis(boxes[:, 0], boxes[:, 2], n, width)
    y0, y1, fy = _sample_axis(boxes[:, 1], boxes[:, 3], n, height)

    flat = frame.ravel()
    r0 = (y0 * width)[:, :, None]
    r1 = (y1 * width)[:, :, None]
    c0, c1 = x0[:, None, :], x1[:, None, :]
    fx = fx[:, None, :]
    fy = fy[:, :, None]
    top = flat[r0 + c0]
    top += fx * (flat[r0 + c1] - top)
    bottom = flat[r1 + c0]
    bottom += fx * (flat[r1 + c1] - bottom)
    bottom -= top
    bottom *= fy
    bottom += top
    return bottom


def warp_region(frame: np.ndarray, box: BoundingBox, n: int) -> np.ndarray:
    """Resample ``box`` of ``frame`` to an ``n x n`` image."""
    if box.w <= 0 or box.h <= 0:
        raise InvalidBoxError(f"degenerate box {box}")
    return warp_regions(frame, np.array([box.as_tuple()]), n)[0]


def extract_patches(img: np.ndarray, w: int) -> np.ndarray:
    """All ``w x w`` windows at stride 1, raster order over top-left corners.

    Returns an array of shape ``((n-w+1)**2, w, w)``.  The patches are raw
    copies; see :func:`normalize_patch`.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2D image, got shape {img.shape}")
    if w < 1 or w > min(img.shape):
        raise DimensionError(f"window {w} does not fit image of shape {img.shape}")
    windows = sliding_window_view(img, (w, w))
    return windows.reshape(-1, w, w).copy()


def patch_matrix(imgs: np.ndarray, w: int) -> np.ndarray:
    """Raw patches of a stack of images as rows: ``(K, l, w*w)``."""
    imgs = np.asarray(imgs, dtype=np.float64)
    if imgs.ndim == 2:
        imgs = imgs[None]
    k, rows, cols = imgs.shape
    if w < 1 or w > min(rows, cols):
        raise DimensionError(f"window {w} does not fit images of shape {(rows, cols)}")
    windows = sliding_window_view(imgs, (w, w), axis=(1, 2))
    return windows.reshape(k, -1, w * w)


def normalize_rows(rows: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-norm along the last axis; constant rows become zero."""
    rows = np.asarray(rows, dtype=np.float64)
    centered = rows - rows.mean(axis=-1, keepdims=True)
    norms = np.sqrt(np.einsum("...i,...i->...", centered, centered))[..., None]
    safe = np.where(norms < NORM_EPS, 1.0, norms)
    return np.where(norms < NORM_EPS, 0.0, centered / safe)


def normalize_patch(p: np.ndarray) -> np.ndarray:
    """Local brightness and contrast normalization of a single patch."""
    p = np.asarray(p, dtype=np.float64)
    return normalize_rows(p.reshape(1, -1)).reshape(p.shape)
