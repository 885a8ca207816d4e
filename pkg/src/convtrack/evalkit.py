"""One-pass evaluation: overlap ratio, success and precision curves.

The success curve at ``t`` is the fraction of frames whose overlap is
strictly greater than ``t``, so even a perfect run scores 0 at ``t = 1``.
AUC is the mean of the sampled curve values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import BoundingBox, InvalidBoxError

PRECISION_AT = 20


@dataclass(frozen=True)
class EvalCurve:
    thresholds: np.ndarray
    values: np.ndarray
    summary: float

    def value_at(self, threshold: float) -> float:
        idx = np.flatnonzero(np.isclose(self.thresholds, threshold))
        if idx.size == 0:
            raise KeyError(f"threshold {threshold} is not a sample point")
        return float(self.values[idx[0]])


def _check(box: BoundingBox) -> None:
    if not (np.isfinite(box.w) and np.isfinite(box.h)) or box.w <= 0 or box.h <= 0:
        raise InvalidBoxError(f"degenerate box {box}")


def overlap_ratio(b_t: BoundingBox, b_g: BoundingBox) -> float:
    """Intersection over union of two axis-aligned boxes."""
    _check(b_t)
    _check(b_g)
    ix = max(0.0, min(b_t.x + b_t.w, b_g.x + b_g.w) - max(b_t.x, b_g.x))
    iy = max(0.0, min(b_t.y + b_t.h, b_g.y + b_g.h) - max(b_t.y, b_g.y))
    inter = ix * iy
    # rounding can push identical boxes a few ulps above 1
    return min(1.0, inter / (b_t.area + b_g.area - inter))


def center_error(b_t: BoundingBox, b_g: BoundingBox) -> float:
    _check(b_t)
    _check(b_g)
    return float(np.hypot(b_t.cx - b_g.cx, b_t.cy - b_g.cy))


def _as_nonempty(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"no {what} to evaluate")
    return arr


def success_curve(overlaps, samples: int = 101) -> EvalCurve:
    """Fraction of frames with overlap ``> t`` on ``samples`` points of ``[0, 1]``."""
    s = _as_nonempty(overlaps, "overlaps")
    if samples < 2:
        raise ValueError(f"need at least 2 threshold samples, got {samples}")
    thresholds = np.linspace(0.0, 1.0, samples)
    values = (s[None, :] > thresholds[:, None]).mean(axis=1)
    return EvalCurve(thresholds, values, float(values.mean()))


def precision_curve(errors, max_threshold: int = 50) -> EvalCurve:
    """Fraction of frames with centre error ``<= t`` for ``t = 0, 1, ..., max_threshold``."""
    e = _as_nonempty(errors, "center errors")
    if max_threshold < PRECISION_AT:
        raise ValueError(f"max_threshold must reach {PRECISION_AT} px, got {max_threshold}")
    thresholds = np.arange(max_threshold + 1, dtype=np.float64)
    values = (e[None, :] <= thresholds[:, None]).mean(axis=1)
    return EvalCurve(thresholds, values, float(values[PRECISION_AT]))


def evaluate(results, groundtruth) -> tuple[EvalCurve, EvalCurve]:
    """Success and precision curves of a run against per-frame ground truth."""
    if len(results) != len(groundtruth):
        raise ValueError(f"{len(results)} result boxes but {len(groundtruth)} ground-truth boxes")
    overlaps = [overlap_ratio(a, b) for a, b in zip(results, groundtruth)]
    errors = [center_error(a, b) for a, b in zip(results, groundtruth)]
    return success_curve(overlaps), precision_curve(errors)


def write_curve_csv(curve: EvalCurve, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "value"])
        for t, v in zip(curve.thresholds, curve.values):
            writer.writerow([f"{t:g}", repr(float(v))])


def read_curve_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["threshold", "value"]:
        raise ValueError(f"{path}: missing 'threshold,value' header")
    data = np.array(rows[1:], dtype=np.float64).reshape(-1, 2)
    return data[:, 0], data[:, 1]
