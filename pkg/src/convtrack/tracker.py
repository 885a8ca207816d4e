"""Particle-filter tracking loop on top of the convolutional representation.

The state of the target is ``(x, y, s)``: box centre in pixels and a scale
multiplier applied to the size of the initial box.  Every frame the
particles are re-drawn around the previous estimate from an isotropic
Gaussian (Brownian motion), scored against the running template, and the
best one is taken as the new estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace

import numba
import numpy as np

from . import featnet
from .featnet import ComplexRep
from .filterbank import (
    FilterBank,
    build_background_filters,
    learn_filters,
    random_filters,
    sample_background_boxes,
)
from .imagecore import NORM_EPS, BoundingBox, DimensionError, warp_region, warp_regions

log = logging.getLogger(__name__)

VARIANTS = ("full", "random_filters", "no_shrinkage")
SCALE_MIN, SCALE_MAX = 0.1, 10.0
_CHUNK = 20


class ConfigError(ValueError):
    pass


class InitError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    n: int = 32
    w: int = 6
    d: int = 100
    rho: float = 0.95
    sigma_x: float = 4.0
    sigma_y: float = 4.0
    sigma_s: float = 0.01
    num_particles: int = 600
    m: int = 8
    seed: int = 0
    variant: str = "full"
    # multiply the likelihood by the Gaussian motion prior when picking the MAP particle
    motion_prior: bool = False
    # threshold with the literal signed median instead of the median magnitude
    signed_lambda: bool = False
    kmeans_iters: int = 100

    def __post_init__(self):
        for name in ("n", "w", "d", "num_particles", "m", "kmeans_iters"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.w > self.n:
            raise ConfigError(f"receptive field w={self.w} exceeds warp size n={self.n}")
        if self.d > (self.n - self.w + 1) ** 2:
            raise ConfigError(f"d={self.d} exceeds the {(self.n - self.w + 1) ** 2} patches per image")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        for name in ("sigma_x", "sigma_y", "sigma_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")

    @property
    def rep_dim(self) -> int:
        return (self.n - self.w + 1) ** 2 * self.d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class TargetState:
    x: float
    y: float
    s: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")

    def box(self, initial: BoundingBox) -> BoundingBox:
        return BoundingBox.from_center(self.x, self.y, initial.w * self.s, initial.h * self.s)


@dataclass
class ParticleSet:
    states: np.ndarray  # (N, 3) rows of x, y, s
    weights: np.ndarray  # (N,)

    def __len__(self):
        return self.states.shape[0]

    def state(self, i: int) -> TargetState:
        x, y, s = self.states[i]
        return TargetState(float(x), float(y), float(s))


@dataclass
class TrackerState:
    config: TrackerConfig
    bank: FilterBank
    template: ComplexRep
    current: TargetState
    initial_box: BoundingBox
    rng: np.random.Generator
    particles: ParticleSet | None = None
    frame_index: int = 0
    # soft threshold of the latest template observation, reused for candidates
    threshold: float = 0.0
    log_likelihoods: np.ndarray | None = field(default=None, repr=False)


def _shrink(raw: ComplexRep, cfg: TrackerConfig) -> tuple[ComplexRep, float]:
    if cfg.variant == "no_shrinkage":
        return ComplexRep(raw.values.copy(), sparse=False), 0.0
    lam = featnet.adaptive_lambda(raw, signed=cfg.signed_lambda)
    return featnet.soft_shrink(raw, lam), lam


def _background(frame, around: BoundingBox, cfg: TrackerConfig) -> np.ndarray:
    height, width = frame.shape
    # the scale search may grow a box past the frame; sample with a clipped size then
    sized = BoundingBox(around.x, around.y, min(around.w, width), min(around.h, height))
    boxes = sample_background_boxes(sized, width, height, cfg.m)
    return build_background_filters(
        frame, boxes, cfg.d, cfg.w, cfg.n, seed=cfg.seed,
        max_iters=cfg.kmeans_iters, random=cfg.variant == "random_filters",
    )


def init(frame: np.ndarray, box: BoundingBox, cfg: TrackerConfig | None = None) -> TrackerState:
    """Learn the filters and the first template from the annotated frame."""
    cfg = cfg or TrackerConfig()
    frame = np.asarray(frame, dtype=np.float64)
    height, width = frame.shape
    if not (0 <= box.cx < width and 0 <= box.cy < height):
        raise InitError(f"box {box.as_tuple()} lies outside the {width}x{height} frame")
    if box.w < cfg.w or box.h < cfg.w:
        raise InitError(f"box {box.w}x{box.h} is smaller than the receptive field {cfg.w}")
    if box.w > width or box.h > height:
        raise InitError(f"box {box.w}x{box.h} is larger than the {width}x{height} frame")

    target = warp_region(frame, box, cfg.n)
    if cfg.variant == "random_filters":
        obj = random_filters(target, cfg.d, cfg.w, seed=cfg.seed)
    else:
        obj = learn_filters(target, cfg.d, cfg.w, seed=cfg.seed, max_iters=cfg.kmeans_iters)
    bank = FilterBank(obj, _background(frame, box, cfg))
    template, lam = _shrink(featnet.complex_rep(target, bank), cfg)
    return TrackerState(
        config=cfg,
        bank=bank,
        template=template,
        current=TargetState(box.cx, box.cy, 1.0),
        initial_box=box,
        rng=np.random.default_rng(cfg.seed),
        threshold=lam,
    )


def diffuse_particles(prev: TargetState, cfg: TrackerConfig, rng: np.random.Generator) -> ParticleSet:
    """Draw ``cfg.num_particles`` states from ``N(prev, diag(sigma))``, uniform weights."""
    count = cfg.num_particles
    noise = rng.standard_normal((count, 3))
    sigmas = np.array([cfg.sigma_x, cfg.sigma_y, cfg.sigma_s])
    states = np.array([prev.x, prev.y, prev.s]) + noise * sigmas
    states[:, 2] = np.clip(states[:, 2], SCALE_MIN, SCALE_MAX)
    return ParticleSet(states, np.full(count, 1.0 / count))


def likelihood(template: ComplexRep, cand: ComplexRep) -> float:
    """Observation likelihood ``exp(-||template - cand||_2)``."""
    if template.dim != cand.dim:
        raise DimensionError(f"template dim {template.dim} != candidate dim {cand.dim}")
    return float(np.exp(-np.linalg.norm(template.values - cand.values)))


def update_template(c_prev: ComplexRep, c_hat: ComplexRep, rho: float) -> ComplexRep:
    """Temporal low-pass filter ``(1 - rho) * c_prev + rho * c_hat``."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}")
    if c_prev.dim != c_hat.dim:
        raise DimensionError(f"template dims differ: {c_prev.dim} vs {c_hat.dim}")
    if rho == 0.0:
        values = c_prev.values.copy()
    elif rho == 1.0:
        values = c_hat.values.copy()
    else:
        values = (1.0 - rho) * c_prev.values + rho * c_hat.values
    return ComplexRep(values, sparse=c_prev.sparse or c_hat.sparse)


def particle_boxes(states: np.ndarray, initial: BoundingBox) -> np.ndarray:
    w = initial.w * states[:, 2]
    h = initial.h * states[:, 2]
    return np.column_stack([states[:, 0] - w / 2.0, states[:, 1] - h / 2.0, w, h])


def masked_distances(
    frame, boxes: np.ndarray, bank: FilterBank, template: ComplexRep, n: int, lam: float = 0.0
) -> np.ndarray:
    """``||template - mask * shrink(raw_i, lam)||_2`` for each candidate box.

    ``raw_i`` is the complex-cell vector of candidate ``i`` and ``mask`` the
    support of the template.  ``lam = 0`` skips the shrinkage.  Responses
    are computed in single precision (relative error around 1e-7).
    """
    if lam < 0:
        raise featnet.InvalidThresholdError(f"threshold must be non-negative, got {lam}")
    d, w = bank.d, bank.w
    flat_t = np.ascontiguousarray(bank.difference_filters().reshape(d, w * w).T, dtype=np.float32)
    t_ld = np.ascontiguousarray(template.values.reshape(d, -1).T)
    support = (t_ld != 0).astype(np.float64)
    # zero-mean filters ignore a constant offset; centring keeps float32 responses accurate
    frame = np.asarray(frame, dtype=np.float64)
    frame = frame - frame.mean()
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    out = np.empty(boxes.shape[0])
    for start in range(0, boxes.shape[0], _CHUNK):
        chunk = boxes[start:start + _CHUNK]
        by_loc, inv = _windows32(warp_regions(frame, chunk, n), w, featnet.FLAT_RTOL, NORM_EPS)
        _shrunk_sq_dists(by_loc, inv, flat_t, t_ld, support, float(lam), out[start:start + len(chunk)])
    return np.sqrt(out)


@numba.njit(cache=True)
def _shrunk_sq_dists(by_loc, inv, flat_t, t_ld, support, lam, out):  # pragma: no cover - compiled
    # one small product per window location, consumed while it is still in cache;
    # branch-free with one accumulator per (box, filter) so the inner loop vectorizes
    n_loc, n_box, _ = by_loc.shape
    d = flat_t.shape[1]
    acc = np.zeros((n_box, d))
    for l in range(n_loc):
        resp = np.dot(by_loc[l], flat_t)
        for k in range(n_box):
            sc = inv[l, k]
            for j in range(d):
                v = resp[k, j] * sc
                a = max(abs(v) - lam, 0.0)
                diff = (t_ld[l, j] - np.copysign(a, v)) * support[l, j]
                acc[k, j] += diff * diff
    for k in range(n_box):
        out[k] = acc[k].sum()


@numba.njit(cache=True)
def _windows32(imgs, w, rtol, eps):  # pragma: no cover - compiled
    # location-major float32 windows plus the inverse norm of each mean-subtracted window
    n_box, n, _ = imgs.shape
    side = n - w + 1
    ww = w * w
    by_loc = np.empty((side * side, n_box, ww), dtype=np.float32)
    inv = np.empty((side * side, n_box))
    for r in range(side):
        for c in range(side):
            l = r * side + c
            for k in range(n_box):
                s1 = 0.0
                s2 = 0.0
                for u in range(w):
                    for v in range(w):
                        p = imgs[k, r + u, c + v]
                        by_loc[l, k, u * w + v] = p
                        s1 += p
                        s2 += p * p
                norm = np.sqrt(max(s2 - s1 * s1 / ww, 0.0))
                if norm < eps or norm <= rtol * np.sqrt(s2):
                    inv[l, k] = 0.0
                else:
                    inv[l, k] = 1.0 / norm
    return by_loc, inv


def masked_distances_reference(
    frame, boxes: np.ndarray, bank: FilterBank, template: ComplexRep, n: int, lam: float = 0.0
) -> np.ndarray:
    """Candidate-by-candidate version of :func:`masked_distances`."""
    out = np.empty(len(boxes))
    for i, (x, y, bw, bh) in enumerate(boxes):
        raw = featnet.complex_rep(warp_region(frame, BoundingBox(x, y, bw, bh), n), bank)
        cand = featnet.candidate_rep(featnet.soft_shrink(raw, lam), template)
        out[i] = np.linalg.norm(template.values - cand.values)
    return out


def _log_prior(states: np.ndarray, prev: TargetState, cfg: TrackerConfig) -> np.ndarray:
    total = np.zeros(states.shape[0])
    for col, centre, sigma in ((0, prev.x, cfg.sigma_x), (1, prev.y, cfg.sigma_y), (2, prev.s, cfg.sigma_s)):
        if sigma > 0:
            total -= 0.5 * ((states[:, col] - centre) / sigma) ** 2
    return total


def step(state: TrackerState, frame: np.ndarray) -> tuple[TrackerState, BoundingBox]:
    """Track one frame; returns the new state and the estimated box."""
    cfg = state.config
    frame = np.asarray(frame, dtype=np.float64)
    prev_box = state.current.box(state.initial_box)

    bank = state.bank.with_background(_background(frame, prev_box, cfg))
    particles = diffuse_particles(state.current, cfg, state.rng)
    boxes = particle_boxes(particles.states, state.initial_box)

    loglik = -masked_distances(frame, boxes, bank, state.template, cfg.n, state.threshold)
    score = loglik + _log_prior(particles.states, state.current, cfg) if cfg.motion_prior else loglik
    weights = np.exp(score - score.max())
    particles.weights = weights / weights.sum()
    best = int(np.argmax(score))  # first maximum on ties

    winner = particles.state(best)
    win_box = winner.box(state.initial_box)
    raw = featnet.complex_rep(warp_region(frame, win_box, cfg.n), bank)
    shrunk, lam = _shrink(raw, cfg)
    # the winner is observed through the template mask like every other candidate,
    # so the update can never grow the template's support
    c_hat = featnet.candidate_rep(shrunk, state.template)
    template = update_template(state.template, c_hat, cfg.rho)

    new_state = replace(
        state,
        bank=bank,
        template=template,
        current=winner,
        particles=particles,
        frame_index=state.frame_index + 1,
        threshold=lam,
        log_likelihoods=loglik,
    )
    return new_state, win_box


def track(frames, box: BoundingBox, cfg: TrackerConfig | None = None):
    """Run over an iterable of gray frames; yields one box per frame.

    The first frame is the annotated one and yields ``box`` itself.
    """
    frames = iter(frames)
    first = next(frames)
    state = init(first, box, cfg)
    yield box
    for frame in frames:
        state, out = step(state, frame)
        yield out
