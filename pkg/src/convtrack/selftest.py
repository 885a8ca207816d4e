"""Quick invariant checks that run without pytest (``convtrack selftest``)."""

from __future__ import annotations

import numpy as np

from . import evalkit, featnet
from .filterbank import FilterBank
from .imagecore import BoundingBox, normalize_rows
from .tracker import update_template


def _shrink_is_prox(rng) -> bool:
    v = rng.normal(size=20) * 2
    lam = float(rng.uniform(0, 2))
    got = featnet.soft_shrink(v, lam).values
    grid = np.linspace(-8, 8, 32001)
    obj = lam * np.abs(grid)[None, :] + 0.5 * (grid[None, :] - v[:, None]) ** 2
    return bool(np.all(np.abs(got - grid[np.argmin(obj, axis=1)]) <= 1e-3))


def _normalization_invariant(rng) -> bool:
    p = rng.random((10, 36))
    return all(
        np.allclose(normalize_rows(a * p + b), normalize_rows(p), atol=1e-9)
        for a in (0.5, 2.0, 10.0) for b in (-0.3, 0.2)
    )


def _fft_matches_direct(rng) -> bool:
    img, filt = rng.random((40, 33)), rng.standard_normal((6, 5))
    diff = featnet.convolve_valid_fast(img, filt) - featnet.convolve_valid(img, filt)
    return float(np.max(np.abs(diff))) < 1e-6


def _difference_is_linear(rng) -> bool:
    img = rng.random((20, 20))
    fo, fb = rng.standard_normal((2, 3, 6, 6))
    maps = featnet.simple_maps(img, FilterBank(fo, fb))
    return all(
        np.allclose(m, featnet.convolve_valid(img, a) - featnet.convolve_valid(img, b), atol=1e-9)
        for m, a, b in zip(maps, fo, fb)
    )


def _update_is_convex(rng) -> bool:
    a, b = featnet.ComplexRep(rng.normal(size=50)), featnet.ComplexRep(rng.normal(size=50))
    out = update_template(a, b, float(rng.random())).values
    lo, hi = np.minimum(a.values, b.values), np.maximum(a.values, b.values)
    return bool(np.all((out >= lo) & (out <= hi)))


def _iou_example(rng) -> bool:
    return evalkit.overlap_ratio(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2)) == 1 / 7


CHECKS = {
    "soft shrinkage is the l1 proximal map": _shrink_is_prox,
    "patch normalization ignores gain and offset": _normalization_invariant,
    "FFT correlation matches direct correlation": _fft_matches_direct,
    "difference-filter maps are linear": _difference_is_linear,
    "template update stays between its inputs": _update_is_convex,
    "overlap of offset squares is 1/7": _iou_example,
}


def run(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS.items():
        passed = check(rng)
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}")
    return ok
