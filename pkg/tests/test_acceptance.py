"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed in the pytest terminal summary (see conftest.py), or
directly when this file is run as a script.
"""

import time

import numpy as np
import pytest

from convtrack import dataio, evalkit, featnet
from convtrack.cli import cli_main
from convtrack.filterbank import FilterBank, learn_filters
from convtrack.featnet import ComplexRep
from convtrack.imagecore import BoundingBox, extract_patches, normalize_rows
from convtrack.synth import MotionSpec, synth_sequence
from convtrack.tracker import TrackerConfig, init, track, update_template

RESULTS: dict[int, tuple[bool, str]] = {}
SEEDS = range(10)


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def format_results() -> list[str]:
    return [f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}" for n, (ok, detail) in sorted(RESULTS.items())]


# -- 1 ----------------------------------------------------------------------

def _grid_minimizer(v: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Per-coordinate argmin of ``lam|c| + (c - v)^2 / 2`` by successively refined grids."""
    lo = np.minimum(v, 0.0) - 1.0
    hi = np.maximum(v, 0.0) + 1.0
    steps = 201
    frac = np.linspace(0.0, 1.0, steps)
    while True:
        grid = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        obj = lam[:, None] * np.abs(grid) + 0.5 * (grid - v[:, None]) ** 2
        best = grid[np.arange(v.size), np.argmin(obj, axis=1)]
        spacing = (hi - lo) / (steps - 1)
        if spacing.max() < 1e-9:
            return best
        # the objective is convex, so the minimizer lies within one step of the best sample
        lo, hi = best - spacing, best + spacing


def test_criterion_1_soft_shrink_is_grid_optimal():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    vecs, lams = [], []
    for _ in range(1000):
        dim = int(rng.integers(1, 51))
        vecs.append(rng.normal(scale=2.0, size=dim))
        lams.append(np.full(dim, rng.uniform(0.0, 2.0)))
    got = np.concatenate([featnet.soft_shrink(v, lam[0]).values for v, lam in zip(vecs, lams)])
    oracle = _grid_minimizer(np.concatenate(vecs), np.concatenate(lams))
    elapsed = time.perf_counter() - start
    err = float(np.max(np.abs(got - oracle)))
    record(1, err <= 1e-6 and elapsed < 10.0, f"max |shrink - grid argmin| = {err:.2e} (<= 1e-6), {elapsed:.2f} s (< 10 s)")


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_dimensions():
    cfg = TrackerConfig()
    seq = synth_sequence(MotionSpec(frames=1))
    state = init(seq.frames[0], seq.gt[0], cfg)
    patches = extract_patches(np.zeros((cfg.n, cfg.n)), cfg.w).shape[0]
    dim = state.template.dim
    ok = (cfg.n, cfg.w, cfg.d) == (32, 6, 100) and patches == 729 and dim == 72900 == cfg.rep_dim
    record(2, ok, f"n={cfg.n}, w={cfg.w}, d={cfg.d}: {patches} patches, template dim {dim}")


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_illumination_invariance():
    rng = np.random.default_rng(303)
    patches = rng.random((500, 36))
    base = normalize_rows(patches)
    worst = 0.0
    for alpha in (0.5, 2.0, 10.0):
        for beta in (-0.3, 0.2):
            worst = max(worst, float(np.max(np.abs(normalize_rows(alpha * patches + beta) - base))))
    record(3, worst <= 1e-9, f"max deviation {worst:.2e} over 500 patches x 6 (alpha, beta) (<= 1e-9)")


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_fft_matches_direct():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 65))
        w = int(rng.integers(1, n + 1))
        img, filt = rng.random((n, n)), rng.standard_normal((w, w))
        diff = featnet.convolve_valid_fast(img, filt) - featnet.convolve_valid(img, filt)
        worst = max(worst, float(np.max(np.abs(diff))))
    record(4, worst < 1e-6, f"max |FFT - direct| = {worst:.2e} over 200 pairs, n <= 64 (< 1e-6)")


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_difference_filter_linearity():
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(6, 40))
        img = rng.random((n, n))
        bank = FilterBank(rng.standard_normal((5, 6, 6)), rng.standard_normal((5, 6, 6)))
        for fast in (False, True):
            maps = featnet.simple_maps(img, bank, fast=fast)
            for m, fo, fb in zip(maps, bank.object_filters, bank.background_filters):
                ref = featnet.convolve_valid(img, fo) - featnet.convolve_valid(img, fb)
                worst = max(worst, float(np.max(np.abs(m - ref))))
    record(5, worst <= 1e-9, f"max |map(F_o - F_b) - (map(F_o) - map(F_b))| = {worst:.2e} (<= 1e-9)")


# -- 6 and 7 ----------------------------------------------------------------

def _run_suite(variant: str):
    overlaps, errors = [], []
    start = time.perf_counter()
    for seed in SEEDS:
        seq = synth_sequence(MotionSpec(seed=seed))
        boxes = list(track(seq.frames, seq.gt[0], TrackerConfig(seed=seed, variant=variant)))
        overlaps.append([evalkit.overlap_ratio(a, b) for a, b in zip(boxes, seq.gt)])
        errors.append([evalkit.center_error(a, b) for a, b in zip(boxes, seq.gt)])
    return np.array(overlaps), np.array(errors), time.perf_counter() - start


@pytest.fixture(scope="module")
def suite_runs():
    return {}


def _suite(runs: dict, variant: str):
    if variant not in runs:
        runs[variant] = _run_suite(variant)
    return runs[variant]


def test_criterion_6_synthetic_tracking(suite_runs):
    spec = MotionSpec()
    assert spec.frames == 50 and spec.frame_size == 240 and spec.target_size == 64
    assert np.hypot(*spec.velocity) == pytest.approx(2.0) and spec.scale_amplitude == 0.05
    overlaps, errors, elapsed = _suite(suite_runs, "full")
    mean_overlap = float(overlaps.mean())
    within = float(np.mean(errors <= 5.0))
    ok = mean_overlap >= 0.5 and within >= 0.9 and elapsed < 120.0
    record(
        6,
        ok,
        f"mean overlap {mean_overlap:.3f} (>= 0.5), center error <= 5 px in {100 * within:.1f}% of frames "
        f"(>= 90%), worst seed {100 * np.mean(errors <= 5.0, axis=1).min():.0f}%, {elapsed:.1f} s for 10 seeds (< 120 s)",
    )


def test_criterion_7_ablation_ordering(suite_runs):
    full = float(_suite(suite_runs, "full")[0].mean())
    no_shrink = float(_suite(suite_runs, "no_shrinkage")[0].mean())
    rand = float(_suite(suite_runs, "random_filters")[0].mean())
    ok = full >= no_shrink and full >= rand
    record(7, ok, f"mean overlap full {full:.4f}, no_shrinkage {no_shrink:.4f}, random_filters {rand:.4f} (full >= both)")


# -- 8 ----------------------------------------------------------------------

def test_criterion_8_metric_sanity():
    iou = evalkit.overlap_ratio(BoundingBox(0, 0, 2, 2), BoundingBox(1, 1, 2, 2))
    gt = synth_sequence(MotionSpec(frames=20, seed=8)).gt
    success, precision = evalkit.evaluate(gt, gt)
    below_one = success.values[success.thresholds < 1.0]
    ok = iou == 1 / 7 and precision.summary == 1.0 and np.all(below_one == 1.0)
    record(8, ok, f"IoU {iou!r} == 1/7, precision@20 {precision.summary}, success = 1 at all {below_one.size} t < 1")


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_deterministic_results(tmp_path):
    seq_dir = dataio.write_sequence(synth_sequence(MotionSpec(frames=6, seed=9)), tmp_path / "seq")
    outs = []
    for run in range(2):
        out = tmp_path / f"run{run}.txt"
        assert cli_main(["track", "--seq", str(seq_dir), "--from-gt", "--out", str(out), "--seed", "9"]) == 0
        outs.append(out.read_bytes())
    record(9, outs[0] == outs[1], f"two track runs, {len(outs[0])} bytes each, identical: {outs[0] == outs[1]}")


# -- 10 ---------------------------------------------------------------------

def test_criterion_10_template_update_convexity():
    rng = np.random.default_rng(1010)
    inside = True
    for _ in range(1000):
        a, b = rng.normal(scale=3.0, size=(2, int(rng.integers(1, 200))))
        out = update_template(ComplexRep(a), ComplexRep(b), float(rng.random())).values
        inside &= bool(np.all(out >= np.minimum(a, b)) and np.all(out <= np.maximum(a, b)))
    a, b = ComplexRep(rng.normal(size=72900)), ComplexRep(rng.normal(size=72900))
    exact = np.array_equal(update_template(a, b, 0.0).values, a.values) and np.array_equal(
        update_template(a, b, 1.0).values, b.values
    )
    record(10, inside and exact, f"1000 random updates inside [min, max]: {inside}; rho=0/1 exact: {exact}")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
