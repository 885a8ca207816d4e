"""Synthetic test sequences with exact ground truth.

A square of smoothed random texture moves over a second, independent
texture.  The path is a linear translation of the box centre, optionally
with a sinusoidal size oscillation and a global brightness ramp.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .imagecore import BoundingBox


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class MotionSpec:
    frames: int = 50
    frame_size: int = 240
    target_size: float = 64.0
    start: tuple[float, float] = (72.0, 80.0)  # box centre at frame 0
    velocity: tuple[float, float] = (1.6, 1.2)  # px / frame
    scale_amplitude: float = 0.05
    scale_period: float = 25.0  # frames
    brightness_step: float = 0.002  # added to every pixel per frame
    texture_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.frames < 1:
            raise SynthSpecError(f"need at least one frame, got {self.frames}")
        if self.target_size <= 0:
            raise SynthSpecError(f"target size must be positive, got {self.target_size}")
        biggest = self.target_size * (1.0 + abs(self.scale_amplitude))
        if biggest > self.frame_size:
            raise SynthSpecError(f"target of up to {biggest:.1f} px does not fit a {self.frame_size} px frame")
        if self.scale_period <= 0:
            raise SynthSpecError("scale period must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "MotionSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SynthSpecError(f"unknown motion spec keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("start", "velocity"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "MotionSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def box_at(self, t: int) -> BoundingBox:
        size = self.target_size * (1.0 + self.scale_amplitude * np.sin(2.0 * np.pi * t / self.scale_period))
        cx = self.start[0] + self.velocity[0] * t
        cy = self.start[1] + self.velocity[1] * t
        return BoundingBox.from_center(float(cx), float(cy), float(size), float(size))


def random_texture(rng: np.random.Generator, size: int, sigma: float, lo: float, hi: float) -> np.ndarray:
    tex = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return lo + (hi - lo) * tex


def _bilinear(tex: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    size = tex.shape[0]
    u = np.clip(u, 0.0, size - 1)
    v = np.clip(v, 0.0, size - 1)
    u0 = np.floor(u).astype(np.intp)
    v0 = np.floor(v).astype(np.intp)
    u1 = np.minimum(u0 + 1, size - 1)
    v1 = np.minimum(v0 + 1, size - 1)
    fu, fv = u - u0, v - v0
    top = (1 - fu) * tex[v0, u0] + fu * tex[v0, u1]
    bot = (1 - fu) * tex[v1, u0] + fu * tex[v1, u1]
    return (1 - fv) * top + fv * bot


def render_frame(spec: MotionSpec, background: np.ndarray, texture: np.ndarray, t: int) -> np.ndarray:
    box = spec.box_at(t)
    frame = background.copy()
    size = spec.frame_size
    centres = np.arange(size) + 0.5
    cols = (centres >= box.x) & (centres < box.x + box.w)
    rows = (centres >= box.y) & (centres < box.y + box.h)
    if cols.any() and rows.any():
        tex_n = texture.shape[0]
        u = (centres[cols] - box.x) / box.w * tex_n - 0.5
        v = (centres[rows] - box.y) / box.h * tex_n - 0.5
        uu, vv = np.meshgrid(u, v)
        frame[np.ix_(rows, cols)] = _bilinear(texture, uu, vv)
    return np.clip(frame + t * spec.brightness_step, 0.0, 1.0)


def synth_sequence(spec: MotionSpec, name: str = "synthetic"):
    """Render every frame of ``spec`` in memory; returns a :class:`Sequence`."""
    from .dataio import Sequence

    rng = np.random.default_rng(spec.seed)
    background = random_texture(rng, spec.frame_size, spec.texture_sigma, 0.15, 0.65)
    tex_n = int(round(spec.target_size))
    texture = random_texture(rng, tex_n, spec.texture_sigma, 0.05, 0.85)
    frames = [render_frame(spec, background, texture, t) for t in range(spec.frames)]
    gt = [spec.box_at(t) for t in range(spec.frames)]
    return Sequence(frames=frames, gt=gt, name=name)
