"""Sequences on disk, ground-truth and results files, and tracker config files.

Sequence directories follow the OTB layout::

    <seq>/img/0001.jpg ...
    <seq>/groundtruth_rect.txt      (optional, one ``x,y,w,h`` per line)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image

from .imagecore import BoundingBox, to_gray
from .tracker import TrackerConfig

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".pgm", ".ppm"}
GT_NAME = "groundtruth_rect.txt"
RESULTS_MAGIC = "# convtrack results v1"
_SPLIT = re.compile(r"[,\s]+")


class LoadError(OSError):
    pass


class FormatError(ValueError):
    pass


@dataclass
class Sequence:
    """Frames are file paths or already decoded gray arrays."""

    frames: list
    gt: list[BoundingBox] | None = None
    name: str = ""

    def __post_init__(self):
        if not self.frames:
            raise FormatError(f"sequence {self.name!r} has no frames")
        if self.gt is not None and len(self.gt) != len(self.frames):
            raise FormatError(
                f"sequence {self.name!r}: {len(self.frames)} frames but {len(self.gt)} ground-truth boxes"
            )

    def __len__(self):
        return len(self.frames)

    def frame(self, i: int) -> np.ndarray:
        ref = self.frames[i]
        if isinstance(ref, np.ndarray):
            return ref
        return load_image(ref)

    def iter_frames(self):
        for i in range(len(self.frames)):
            yield self.frame(i)


@dataclass
class RunRecord:
    boxes: list[BoundingBox]
    config: TrackerConfig = field(default_factory=TrackerConfig)
    # timing is runtime-dependent, so it is neither written nor compared
    frame_times: list[float] = field(default_factory=list, compare=False)

    @property
    def seed(self) -> int:
        return self.config.seed


def load_image(path) -> np.ndarray:
    """Decode an 8-bit gray or RGB raster to a gray float image in ``[0, 1]``."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except OSError as exc:
        raise LoadError(f"cannot read image {path}: {exc}") from exc
    return to_gray(arr)


def save_image(path, img: np.ndarray) -> None:
    data = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path)


def _parse_box_line(line: str, lineno: int, source: str) -> BoundingBox:
    parts = [p for p in _SPLIT.split(line.strip()) if p]
    if len(parts) != 4:
        raise FormatError(f"{source}:{lineno}: expected 4 fields, got {len(parts)}")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError as exc:
        raise FormatError(f"{source}:{lineno}: non-numeric field in {line.strip()!r}") from exc
    try:
        return BoundingBox(x, y, w, h)
    except ValueError as exc:
        raise FormatError(f"{source}:{lineno}: {exc}") from exc


def parse_groundtruth(text: str, source: str = "<text>") -> list[BoundingBox]:
    """Parse ``x,y,w,h`` lines separated by commas, tabs or spaces.

    Blank lines and ``#`` comments are skipped; line numbers in errors are
    1-based positions in ``text``.
    """
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        boxes.append(_parse_box_line(stripped, lineno, source))
    return boxes


def read_groundtruth(path) -> list[BoundingBox]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc
    return parse_groundtruth(text, str(path))


def _frame_key(path: Path):
    try:
        return (0, int(path.stem), path.name)
    except ValueError:
        return (1, 0, path.name)


def load_sequence(directory) -> Sequence:
    directory = Path(directory)
    img_dir = directory / "img"
    if not img_dir.is_dir():
        raise LoadError(f"{directory}: missing img/ directory")
    frames = sorted(
        (p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES),
        key=_frame_key,
    )
    if not frames:
        raise LoadError(f"{img_dir}: no image files")
    gt_path = directory / GT_NAME
    gt = read_groundtruth(gt_path) if gt_path.exists() else None
    return Sequence(frames=frames, gt=gt, name=directory.name)


def write_sequence(seq: Sequence, directory) -> Path:
    """Materialize ``seq`` as an OTB-style directory of 8-bit PNG frames."""
    directory = Path(directory)
    img_dir = directory / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(seq))))
    for i in range(len(seq)):
        save_image(img_dir / f"{i + 1:0{width}d}.png", seq.frame(i))
    if seq.gt is not None:
        (directory / GT_NAME).write_text(format_boxes(seq.gt))
    return directory


def format_boxes(boxes) -> str:
    return "".join(f"{float(b.x)!r},{float(b.y)!r},{float(b.w)!r},{float(b.h)!r}\n" for b in boxes)


# -- config ------------------------------------------------------------------

def _coerce(name: str, raw: str, source: str):
    kinds = {f.name: f.type for f in fields(TrackerConfig)}
    kind = kinds[name]
    try:
        if kind in ("int", int):
            return int(raw)
        if kind in ("float", float):
            return float(raw)
        if kind in ("bool", bool):
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise FormatError(f"{source}: bad value {raw!r} for {name}") from exc
    return raw


def parse_config(text: str, source: str = "<config>", base: TrackerConfig | None = None) -> TrackerConfig:
    """Read flat ``key = value`` lines; unknown keys are errors."""
    known = set(TrackerConfig.field_names())
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise FormatError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, raw, f"{source}:{lineno}")
    base = base or TrackerConfig()
    merged = {name: getattr(base, name) for name in known}
    merged.update(values)
    return TrackerConfig(**merged)


def format_config(cfg: TrackerConfig) -> str:
    out = []
    for name in TrackerConfig.field_names():
        value = getattr(cfg, name)
        out.append(f"{name} = {value!r}" if isinstance(value, float) else f"{name} = {value}")
    return "\n".join(out) + "\n"


def load_config(path) -> TrackerConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


# -- results -----------------------------------------------------------------

def write_results(rec: RunRecord, path) -> None:
    path = Path(path)
    # the config block carries the seed line
    header = [RESULTS_MAGIC]
    header += [f"# {line}" for line in format_config(rec.config).splitlines()]
    try:
        path.write_text("\n".join(header) + "\n" + format_boxes(rec.boxes))
    except OSError as exc:
        raise LoadError(f"cannot write results to {path}: {exc}") from exc


def read_results(path) -> RunRecord:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"cannot read results {path}: {exc}") from exc
    config_lines = []
    for line in text.splitlines():
        if line.startswith("#") and "=" in line:
            config_lines.append(line[1:])
    cfg = parse_config("\n".join(config_lines), str(path)) if config_lines else TrackerConfig()
    boxes = parse_groundtruth(text, str(path))
    if not boxes:
        raise FormatError(f"{path}: results file contains no boxes")
    return RunRecord(boxes=boxes, config=cfg)
