"""Programmatic assembly of dirty text images with pixel-exact artifact masks.

Clean text comes from a procedural glyph renderer (or image files); artifacts
are procedural underlines, boxes, smudges and strokes (or image files). Every
sample is built from its own RNG, seeded by :func:`sample_seed`, so a dataset
is a pure function of its :class:`GenConfig`.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imgcore
from .imgcore import BLACK, CANVAS_H, CANVAS_W, WHITE

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class ConfigError(ValueError):
    pass


class ArtifactKind(str, Enum):
    UNDERLINE = "underline"
    BOX = "box"
    SMUDGE = "smudge"
    STROKE = "stroke"
    FILE = "file"


PROCEDURAL_KINDS = (ArtifactKind.UNDERLINE, ArtifactKind.BOX, ArtifactKind.SMUDGE, ArtifactKind.STROKE)


@dataclass(frozen=True)
class OffsetBounds:
    """Inclusive integer bounds for an artifact translation ``(dy, dx)``."""

    dy_min: int
    dy_max: int
    dx_min: int
    dx_max: int

    def __post_init__(self):
        if self.dy_min > self.dy_max or self.dx_min > self.dx_max:
            raise ConfigError(f"offset bounds must satisfy min <= max: {self}")


def default_offsets() -> dict[str, list[OffsetBounds]]:
    # Artifacts are drawn at a canonical position (underline/stroke at the top
    # rows, box/smudge centred); these bands move them where they belong.
    return {
        ArtifactKind.UNDERLINE.value: [OffsetBounds(24, 31, -16, 16)],
        ArtifactKind.BOX.value: [OffsetBounds(-2, 2, -8, 8)],
        ArtifactKind.SMUDGE.value: [OffsetBounds(-12, 12, -56, 56)],
        ArtifactKind.STROKE.value: [OffsetBounds(-8, 4, -16, 16), OffsetBounds(16, 24, -16, 16)],
        ArtifactKind.FILE.value: [OffsetBounds(-8, 8, -16, 16)],
    }


def default_mix() -> dict[str, float]:
    return {k.value: 0.25 for k in PROCEDURAL_KINDS}


@dataclass
class GenConfig:
    master_seed: int = 0
    count: int = 100
    kind_mix: dict[str, float] = field(default_factory=default_mix)
    offsets: dict[str, list[OffsetBounds]] = field(default_factory=default_offsets)
    augment: bool = True
    scale_range: tuple[float, float] = (0.8, 1.0)
    n_glyphs: tuple[int, int] = (3, 8)
    canvas: tuple[int, int] = (CANVAS_H, CANVAS_W)
    clean_files: list[str] = field(default_factory=list)
    artifact_files: list[str] = field(default_factory=list)

    def validate(self) -> "GenConfig":
        if not 0 <= self.master_seed <= MASK64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.count < 0:
            raise ConfigError("count must be >= 0")
        kinds = {k.value for k in ArtifactKind}
        for name, p in self.kind_mix.items():
            if name not in kinds:
                raise ConfigError(f"unknown artifact kind {name!r}")
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability for {name!r} outside [0, 1]: {p}")
        if abs(sum(self.kind_mix.values()) - 1.0) > 1e-9:
            raise ConfigError(f"kind probabilities sum to {sum(self.kind_mix.values())}, not 1")
        for name, p in self.kind_mix.items():
            if p > 0 and not self.offsets.get(name):
                raise ConfigError(f"no offset bounds configured for {name!r}")
        if self.kind_mix.get(ArtifactKind.FILE.value, 0) > 0 and not self.artifact_files:
            raise ConfigError("kind 'file' requires artifact_files")
        lo, hi = self.scale_range
        if not 0 < lo <= hi <= 1:
            raise ConfigError(f"scale_range must lie in (0, 1], got {self.scale_range}")
        g0, g1 = self.n_glyphs
        if not 1 <= g0 <= g1:
            raise ConfigError(f"bad n_glyphs range {self.n_glyphs}")
        if self.canvas[0] < 8 or self.canvas[1] < 8:
            raise ConfigError("canvas must be at least 8x8")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offsets"] = {k: [asdict(b) for b in v] for k, v in self.offsets.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        try:
            if "offsets" in d:
                merged = default_offsets()
                merged.update({k: [OffsetBounds(**b) for b in v] for k, v in d["offsets"].items()})
                d["offsets"] = merged
            for key in ("scale_range", "n_glyphs", "canvas"):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "GenConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class Sample:
    id: str
    clean: np.ndarray
    artifact: np.ndarray  # already translated onto the canvas
    dirty: np.ndarray
    mask: np.ndarray
    offset: tuple[int, int]
    kind: str
    transcript: str | None = None


# -- seeding -----------------------------------------------------------------

def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def sample_seed(master_seed: int, index: int) -> int:
    """Seed of sample ``index``: output ``index + 1`` of a SplitMix64 stream
    started at ``master_seed``."""
    return splitmix64((master_seed + index * GOLDEN_GAMMA) & MASK64)


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(sample_seed(master_seed, index))


# -- rasterisation helpers ---------------------------------------------------

def _stamp(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, thickness: int) -> None:
    """Blacken a ``thickness x thickness`` block at every (y, x) sample point."""
    h, w = img.shape
    off = (thickness - 1) / 2.0
    r0 = np.rint(ys - off).astype(int)
    c0 = np.rint(xs - off).astype(int)
    for du in range(thickness):
        for dv in range(thickness):
            r, c = r0 + du, c0 + dv
            ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            img[r[ok], c[ok]] = BLACK


def _polyline_points(pts: Sequence[tuple[float, float]]) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = [], []
    for (y0, x0), (y1, x1) in zip(pts[:-1], pts[1:]):
        n = max(2, int(math.ceil(2 * math.hypot(y1 - y0, x1 - x0))) + 1)
        t = np.linspace(0.0, 1.0, n)
        ys.append(y0 + (y1 - y0) * t)
        xs.append(x0 + (x1 - x0) * t)
    return np.concatenate(ys), np.concatenate(xs)


def _arc_points(cy, cx, ry, rx, a0, a1) -> tuple[np.ndarray, np.ndarray]:
    n = max(8, int(math.ceil(abs(a1 - a0) / 360.0 * 2 * math.pi * max(ry, rx) * 2)))
    a = np.deg2rad(np.linspace(a0, a1, n))
    return cy + ry * np.sin(a), cx + rx * np.cos(a)


def _with_min_ink(draw, rng: np.random.Generator, min_black: int = 10, tries: int = 100) -> np.ndarray:
    for _ in range(tries):
        img = draw(rng)
        if int((img == BLACK).sum()) >= min_black:
            return img
    raise imgcore.ImageError("could not draw an artifact with enough ink on this canvas")


# -- artifacts ---------------------------------------------------------------

def _underline(rng: np.random.Generator, h: int, w: int, jitter: bool) -> np.ndarray:
    img = imgcore.blank(h, w)
    t = int(rng.integers(1, 4))
    if rng.random() < 0.5:
        c0, length = 0, w
    else:
        length = int(rng.integers(int(math.ceil(0.6 * w)), w + 1))
        c0 = int(rng.integers(0, w - length + 1))
    # rows stay within 0..2: thin lines may wander by one row
    span = 1 if (jitter and t < 3) else 0
    j = int(rng.integers(0, span + 1))
    for c in range(c0, c0 + length):
        if span and rng.random() < 0.03:
            j = 1 - j
        img[j:j + t, c] = BLACK
    return img


def box_pixels(h: int, w: int, top: int, left: int, bh: int, bw: int, stroke: int) -> np.ndarray:
    img = imgcore.blank(h, w)
    img[top:top + bh, left:left + bw] = BLACK
    img[top + stroke:top + bh - stroke, left + stroke:left + bw - stroke] = WHITE
    return img


def _box(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    s = int(rng.integers(1, 3))
    bh = int(rng.integers(max(2 * s + 2, (5 * h) // 8), h - 1))
    bw = int(rng.integers(max(2 * s + 2, w // 2), w - 1))
    return box_pixels(h, w, (h - bh) // 2, (w - bw) // 2, bh, bw, s)


def _smudge(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    img = imgcore.blank(h, w)
    rr, cc = np.mgrid[0:h, 0:w]
    y, x = h / 2.0, w / 2.0
    scale = min(h, w) / 32.0
    for _ in range(int(rng.integers(3, 9))):
        ry = rng.uniform(1.5, 4.0) * scale
        rx = rng.uniform(2.0, 6.0) * scale
        img[((rr - y) / ry) ** 2 + ((cc - x) / rx) ** 2 <= 1.0] = BLACK
        y = float(np.clip(y + rng.uniform(-3, 3) * scale, 0, h - 1))
        x = float(np.clip(x + rng.uniform(-5, 5) * scale, 0, w - 1))
    return img


def _stroke(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    img = imgcore.blank(h, w)
    band = max(3.0, h / 3.0)
    x0 = rng.uniform(0, w - 1)
    x2 = float(np.clip(x0 + rng.choice([-1, 1]) * rng.uniform(w / 6, w / 2), 0, w - 1))
    y0, y2 = rng.uniform(0, band), rng.uniform(0, band)
    x1 = rng.uniform(min(x0, x2), max(x0, x2))
    y1 = rng.uniform(-band / 2, 1.5 * band)
    n = int(4 * (abs(x2 - x0) + band)) + 8
    t = np.linspace(0.0, 1.0, n)
    ys = (1 - t) ** 2 * y0 + 2 * (1 - t) * t * y1 + t ** 2 * y2
    xs = (1 - t) ** 2 * x0 + 2 * (1 - t) * t * x1 + t ** 2 * x2
    _stamp(img, ys, xs, int(rng.integers(1, 3)))
    return img


def load_artifact_file(path: str | os.PathLike, canvas_h: int = CANVAS_H, canvas_w: int = CANVAS_W) -> np.ndarray:
    return imgcore.fit_to_canvas(imgcore.pgm_read(path), canvas_h, canvas_w)


def gen_artifact(kind: ArtifactKind | str, rng: np.random.Generator, canvas_h: int = CANVAS_H,
                 canvas_w: int = CANVAS_W, *, jitter: bool = True,
                 files: Sequence[str] = ()) -> np.ndarray:
    """Draw one binary artifact instance at its canonical position."""
    kind = ArtifactKind(kind)
    if canvas_h < 8 or canvas_w < 8:
        raise imgcore.ImageError("artifact canvas must be at least 8x8")
    if kind is ArtifactKind.FILE:
        if not files:
            raise ConfigError("kind 'file' requires artifact files")
        return load_artifact_file(files[int(rng.integers(0, len(files)))], canvas_h, canvas_w)
    draw = {
        ArtifactKind.UNDERLINE: lambda g: _underline(g, canvas_h, canvas_w, jitter),
        ArtifactKind.BOX: lambda g: _box(g, canvas_h, canvas_w),
        ArtifactKind.SMUDGE: lambda g: _smudge(g, canvas_h, canvas_w),
        ArtifactKind.STROKE: lambda g: _stroke(g, canvas_h, canvas_w),
    }[kind]
    return _with_min_ink(draw, rng)


# -- pseudo text -------------------------------------------------------------

# Unit-square glyph designs: ("line", [(x, y), ...]) or ("arc", (cx, cy, rx, ry, deg0, deg1)).
# y grows downward; angle 0 points right, 90 points down.
GLYPHS: dict[str, list] = {
    "0": [("arc", (.5, .5, .5, .5, 0, 360))],
    "1": [("line", [(.25, .2), (.55, 0), (.55, 1)])],
    "2": [("arc", (.5, .28, .45, .28, 180, 380)), ("line", [(.9, .38), (0, 1), (1, 1)])],
    "3": [("arc", (.5, .25, .45, .25, 180, 450)), ("arc", (.5, .75, .45, .25, 270, 540))],
    "4": [("line", [(.7, 1), (.7, 0), (0, .7), (1, .7)])],
    "5": [("line", [(1, 0), (0, 0), (0, .45)]), ("arc", (.5, .7, .5, .3, 235, 520))],
    "6": [("arc", (.5, .7, .45, .3, 0, 360)), ("line", [(.85, 0), (.08, .62)])],
    "7": [("line", [(0, 0), (1, 0), (.35, 1)])],
    "8": [("arc", (.5, .25, .4, .25, 0, 360)), ("arc", (.5, .75, .5, .25, 0, 360))],
    "9": [("arc", (.5, .3, .45, .3, 0, 360)), ("line", [(.95, .3), (.6, 1)])],
    "A": [("line", [(0, 1), (.5, 0), (1, 1)]), ("line", [(.25, .55), (.75, .55)])],
    "B": [("line", [(0, 0), (0, 1)]), ("arc", (0, .25, .85, .25, 270, 450)), ("arc", (0, .75, 1, .25, 270, 450))],
    "C": [("arc", (.5, .5, .5, .5, 45, 315))],
    "D": [("line", [(0, 0), (0, 1)]), ("arc", (0, .5, 1, .5, 270, 450))],
    "E": [("line", [(1, 0), (0, 0), (0, 1), (1, 1)]), ("line", [(0, .5), (.7, .5)])],
    "F": [("line", [(1, 0), (0, 0), (0, 1)]), ("line", [(0, .5), (.7, .5)])],
}
ALPHABET = "".join(GLYPHS)
CELL_W = 14


def glyph_cells(canvas_h: int, canvas_w: int, n_glyphs: int, cell_w: int = CELL_W) -> list[tuple[int, int, int, int]]:
    """Cell bounds ``(top, left, bottom, right)`` (exclusive ends), centred row of cells."""
    if n_glyphs < 1:
        raise imgcore.ImageError("n_glyphs must be >= 1")
    if canvas_h < 8 or n_glyphs * cell_w + 4 > canvas_w:
        raise imgcore.ImageError(f"{n_glyphs} glyph cells of width {cell_w} do not fit {canvas_h}x{canvas_w}")
    x0 = (canvas_w - n_glyphs * cell_w) // 2
    return [(2, x0 + i * cell_w, canvas_h - 2, x0 + (i + 1) * cell_w) for i in range(n_glyphs)]


def _render_glyph(img: np.ndarray, sym: str, cell: tuple[int, int, int, int], rng: np.random.Generator) -> None:
    top, left, bottom, right = cell
    ch, cw = bottom - top, right - left
    h_img = img.shape[0]
    thick = int(rng.integers(1, 3))
    gh = int(rng.integers(max(3, round(0.45 * h_img)), max(4, min(ch, round(0.72 * h_img)) + 1)))
    gh = min(gh, ch)
    gw = int(rng.integers(max(2, int(0.55 * cw)), max(3, cw - 1)))
    gw = min(gw, cw - thick)
    gy = top + int(rng.integers(0, ch - gh + 1))
    gx = left + int(rng.integers(0, cw - gw - thick + 1))
    sy, sx = gh - thick, gw - 1

    def jit():
        return rng.uniform(-0.04, 0.04)

    cell_img = imgcore.blank(*img.shape)
    for prim, geom in GLYPHS[sym]:
        if prim == "line":
            pts = [(gy + np.clip(y + jit(), 0, 1) * sy, gx + np.clip(x + jit(), 0, 1) * sx) for x, y in geom]
            ys, xs = _polyline_points(pts)
        else:
            cx, cy, rx, ry, a0, a1 = geom
            ys, xs = _arc_points(gy + cy * sy, gx + cx * sx, ry * sy, rx * sx, a0, a1)
        _stamp(cell_img, ys, xs, thick)
    # clip to the cell so neighbouring glyphs never bleed into each other
    img[top:bottom, left:right] = np.minimum(img[top:bottom, left:right], cell_img[top:bottom, left:right])


def gen_pseudo_text(rng: np.random.Generator, canvas_h: int = CANVAS_H, canvas_w: int = CANVAS_W,
                    n_glyphs: int = 5, cell_w: int = CELL_W) -> tuple[np.ndarray, str]:
    cells = glyph_cells(canvas_h, canvas_w, n_glyphs, cell_w)
    img = imgcore.blank(canvas_h, canvas_w)
    symbols = [ALPHABET[int(i)] for i in rng.integers(0, len(ALPHABET), size=n_glyphs)]
    for sym, cell in zip(symbols, cells):
        _render_glyph(img, sym, cell, rng)
    return img, "".join(symbols)


# -- assembly ----------------------------------------------------------------

def sample_offset(rng: np.random.Generator, bounds: OffsetBounds | Sequence[OffsetBounds]) -> tuple[int, int]:
    """Uniform integer offset; given several bands, one band is picked uniformly first."""
    if not isinstance(bounds, OffsetBounds):
        bounds = bounds[int(rng.integers(0, len(bounds)))] if len(bounds) > 1 else bounds[0]
    dy = int(rng.integers(bounds.dy_min, bounds.dy_max + 1))
    dx = int(rng.integers(bounds.dx_min, bounds.dx_max + 1))
    return dy, dx


def assemble(clean, artifact, offset: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    dirty, mask, _ = assemble_full(clean, artifact, offset)
    return dirty, mask


def assemble_full(clean, artifact, offset: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Binarize, translate/crop the artifact, superimpose, derive the mask.

    Returns ``(dirty, mask, placed_artifact)``.
    """
    x = imgcore.binarize(clean)
    art = imgcore.binarize(artifact)
    art = imgcore.translate_and_crop(art, offset[0], offset[1], *x.shape)
    return imgcore.superimpose(x, art), imgcore.derive_mask(x, art), art


def transform_rasters(rasters: Sequence[np.ndarray], scale: float, dy: int, dx: int,
                      canvas: tuple[int, int] = (CANVAS_H, CANVAS_W)) -> list[np.ndarray]:
    """Resize every raster by ``scale`` (nearest neighbour) and place it at ``(dy, dx)``."""
    ch, cw = canvas
    out = []
    for r in rasters:
        h, w = r.shape
        nh, nw = max(1, int(round(h * scale))), max(1, int(round(w * scale)))
        if nh > ch or nw > cw:
            raise imgcore.ImageError(f"scaled raster {(nh, nw)} exceeds canvas {canvas}")
        out.append(imgcore.place_on_canvas(imgcore.resize_nn(r, nh, nw), ch, cw, dy, dx))
    return out


def draw_augmentation(rng: np.random.Generator, shape: tuple[int, int], scale_range: tuple[float, float],
                      canvas: tuple[int, int] = (CANVAS_H, CANVAS_W)) -> tuple[float, int, int]:
    lo, hi = scale_range
    if not 0 < lo <= hi <= 1:
        raise imgcore.ImageError(f"scale_range must lie in (0, 1], got {scale_range}")
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    nh, nw = max(1, int(round(shape[0] * scale))), max(1, int(round(shape[1] * scale)))
    if nh > canvas[0] or nw > canvas[1]:
        raise imgcore.ImageError(f"scaled raster {(nh, nw)} exceeds canvas {canvas}")
    dy = int(rng.integers(0, canvas[0] - nh + 1))
    dx = int(rng.integers(0, canvas[1] - nw + 1))
    return scale, dy, dx


def augment(sample: Sample, rng: np.random.Generator, scale_range: tuple[float, float] = (0.8, 1.0),
            canvas: tuple[int, int] = (CANVAS_H, CANVAS_W)) -> Sample:
    """One resize + shift, applied identically to all four rasters of ``sample``."""
    scale, dy, dx = draw_augmentation(rng, sample.dirty.shape, scale_range, canvas)
    return apply_augmentation(sample, scale, dy, dx, canvas)


def apply_augmentation(sample: Sample, scale: float, dy: int, dx: int,
                       canvas: tuple[int, int] = (CANVAS_H, CANVAS_W)) -> Sample:
    clean, art, dirty, mask = transform_rasters(
        [sample.clean, sample.artifact, sample.dirty, sample.mask], scale, dy, dx, canvas)
    return replace(sample, clean=clean, artifact=art, dirty=dirty, mask=mask)


def check_sample(clean: np.ndarray, dirty: np.ndarray, mask: np.ndarray) -> None:
    """Raise ``ImageError`` unless ``(clean, dirty, mask)`` is a consistent triple.

    The placed artifact is not stored on disk, so consistency is checked as:
    all rasters binary, no mask pixel on clean ink, dirty ink is clean ink plus
    mask ink, and erasing the mask from dirty gives back clean.
    """
    if not (clean.shape == dirty.shape == mask.shape):
        raise imgcore.ImageError("sample rasters differ in shape")
    for name, r in (("clean", clean), ("dirty", dirty), ("mask", mask)):
        if not imgcore.is_binary(r):
            raise imgcore.ImageError(f"{name} raster is not binary")
    c, d, m = clean == BLACK, dirty == BLACK, mask == BLACK
    if np.any(c & m):
        raise imgcore.ImageError("mask marks clean-text pixels as artifact")
    if not np.array_equal(d, c | m):
        raise imgcore.ImageError("dirty ink is not clean ink plus mask ink")
    if not np.array_equal(imgcore.erase_with_mask(dirty, mask), clean):
        raise imgcore.ImageError("erasing the mask does not recover the clean image")


def _choose_kind(rng: np.random.Generator, mix: dict[str, float]) -> str:
    names = [k.value for k in ArtifactKind if mix.get(k.value, 0.0) > 0.0]
    probs = np.array([mix[n] for n in names], dtype=float)
    u = rng.random() * probs.sum()
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return names[min(idx, len(names) - 1)]


def make_sample(cfg: GenConfig, index: int) -> Sample:
    rng = sample_rng(cfg.master_seed, index)
    h, w = cfg.canvas
    kind = _choose_kind(rng, cfg.kind_mix)
    if cfg.clean_files:
        path = cfg.clean_files[int(rng.integers(0, len(cfg.clean_files)))]
        clean, transcript = imgcore.fit_to_canvas(imgcore.pgm_read(path), h, w), None
    else:
        max_fit = max(1, (w - 4) // CELL_W)
        g0, g1 = min(cfg.n_glyphs[0], max_fit), min(cfg.n_glyphs[1], max_fit)
        clean, transcript = gen_pseudo_text(rng, h, w, int(rng.integers(g0, g1 + 1)))
    artifact = gen_artifact(kind, rng, h, w, files=cfg.artifact_files)
    offset = sample_offset(rng, cfg.offsets[kind])
    dirty, mask, placed = assemble_full(clean, artifact, offset)
    s = Sample(f"{index:06d}", clean, placed, dirty, mask, offset, kind, transcript)
    if cfg.augment:
        s = augment(s, rng, cfg.scale_range, cfg.canvas)
    return s


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``INKSTRIP_THREADS`` (falls back to the CPU count)."""
    env = os.environ.get("INKSTRIP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, default or os.cpu_count() or 1)


def _write_sample(out_dir: Path, s: Sample) -> str:
    rel = {sub: f"{sub}/{s.id}.pgm" for sub in ("clean", "dirty", "mask")}
    imgcore.pgm_write(s.clean, out_dir / rel["clean"])
    imgcore.pgm_write(s.dirty, out_dir / rel["dirty"])
    imgcore.pgm_write(s.mask, out_dir / rel["mask"])
    rec = {"id": s.id, "clean": rel["clean"], "dirty": rel["dirty"], "mask": rel["mask"],
           "offset": list(s.offset), "kind": s.kind, "transcript": s.transcript}
    return json.dumps(rec)


def generate_dataset(cfg: GenConfig, out_dir: str | os.PathLike, threads: int | None = None) -> Path:
    """Write ``clean/``, ``dirty/``, ``mask/`` rasters and ``manifest.jsonl``.

    Output bytes depend only on ``cfg``; ``threads`` changes speed, not content.
    """
    cfg.validate()
    out = Path(out_dir)
    for sub in ("clean", "dirty", "mask"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    n_workers = threads or thread_count()

    def job(i: int) -> str:
        return _write_sample(out, make_sample(cfg, i))

    if n_workers > 1 and cfg.count > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            lines = list(ex.map(job, range(cfg.count)))
    else:
        lines = [job(i) for i in range(cfg.count)]
    manifest = out / "manifest.jsonl"
    manifest.write_text("".join(line + "\n" for line in lines))
    return manifest


def read_manifest(path: str | os.PathLike) -> list[dict]:
    text = Path(path).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def load_record(root: str | os.PathLike, rec: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    root = Path(root)
    return (imgcore.pgm_read(root / rec["clean"]), imgcore.pgm_read(root / rec["dirty"]),
            imgcore.pgm_read(root / rec["mask"]))


def validate_manifest(path: str | os.PathLike) -> int:
    """Re-load every record and check it; returns the number of samples checked."""
    path = Path(path)
    recs = read_manifest(path)
    for rec in recs:
        check_sample(*load_record(path.parent, rec))
    return len(recs)
