"""Binary raster algebra: binarization, placement, composition, masks, PGM I/O.

Images are plain ``numpy.uint8`` arrays of shape ``(height, width)`` with
0 = black ink and 255 = white background. Segmentation masks use the same
layout with 0 = artifact and 255 = not-artifact. Coordinates are
``(row, col)`` with the origin top-left; positive ``dy`` moves down.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

WHITE = 255
BLACK = 0
CANVAS_H = 32
CANVAS_W = 128


class ImageError(ValueError):
    """Raised on invalid raster arguments (shape, dtype, values, offsets)."""


class PGMError(ValueError):
    """Base class for PGM decoding failures."""


class PGMUnsupportedFormat(PGMError):
    pass


class PGMBadMaxval(PGMError):
    pass


class PGMMalformedHeader(PGMError):
    pass


class PGMTruncated(PGMError):
    pass


def as_image(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ImageError(f"expected a non-empty 2-D raster, got shape {a.shape}")
    if a.dtype != np.uint8:
        if not np.issubdtype(a.dtype, np.integer) or a.min() < 0 or a.max() > 255:
            raise ImageError(f"raster values must be 8-bit integers, got {a.dtype}")
        a = a.astype(np.uint8)
    return a


def is_binary(img: np.ndarray) -> bool:
    return bool(np.all((img == BLACK) | (img == WHITE)))


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ImageError(f"{what}: dimension mismatch {a.shape} vs {b.shape}")


def black_set(img: np.ndarray) -> set[tuple[int, int]]:
    """Set of ``(row, col)`` coordinates holding a black pixel."""
    return set(map(tuple, np.argwhere(np.asarray(img) == BLACK).tolist()))


def blank(h: int = CANVAS_H, w: int = CANVAS_W) -> np.ndarray:
    return np.full((h, w), WHITE, dtype=np.uint8)


def binarize(img, threshold: int = 128) -> np.ndarray:
    """Pixels strictly below ``threshold`` become black, all others white."""
    a = as_image(img)
    return np.where(a < threshold, BLACK, WHITE).astype(np.uint8)


def superimpose(clean, artifact) -> np.ndarray:
    """Pixelwise minimum: black ink from either image wins."""
    c, a = as_image(clean), as_image(artifact)
    _same_shape(c, a, "superimpose")
    return np.minimum(c, a)


def translate_and_crop(artifact, dy: int, dx: int, target_h: int, target_w: int) -> np.ndarray:
    """Shift ``artifact`` by ``(dy, dx)`` onto a white ``target_h x target_w`` raster.

    Output pixel ``(r, c)`` takes artifact pixel ``(r - dy, c - dx)`` when that
    lies inside the artifact, else white. Any offset is legal.
    """
    a = as_image(artifact)
    if target_h < 1 or target_w < 1:
        raise ImageError("target dimensions must be >= 1")
    out = blank(target_h, target_w)
    h, w = a.shape
    r0, r1 = max(0, dy), min(target_h, dy + h)
    c0, c1 = max(0, dx), min(target_w, dx + w)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = a[r0 - dy:r1 - dy, c0 - dx:c1 - dx]
    return out


def derive_mask(clean, artifact) -> np.ndarray:
    """Ground-truth mask ``s = x_art + (255 - max(x, x_art))`` for binary inputs.

    Black mask pixels are exactly the artifact ink not shared with clean ink.
    """
    c, a = as_image(clean), as_image(artifact)
    _same_shape(c, a, "derive_mask")
    if not (is_binary(c) and is_binary(a)):
        raise ImageError("derive_mask requires binary (0/255) inputs")
    s = a.astype(np.int16) + (WHITE - np.maximum(c, a).astype(np.int16))
    return s.astype(np.uint8)


def erase_with_mask(dirty, mask) -> np.ndarray:
    """Whiten every pixel the mask marks as artifact."""
    d, m = as_image(dirty), as_image(mask)
    _same_shape(d, m, "erase_with_mask")
    return np.where(m == BLACK, WHITE, d).astype(np.uint8)


def resize_nn(img, new_h: int, new_w: int) -> np.ndarray:
    """Nearest-neighbour resample; source index is ``floor(i * old / new)``."""
    a = as_image(img)
    if new_h < 1 or new_w < 1:
        raise ImageError("resize dimensions must be >= 1")
    h, w = a.shape
    rows = (np.arange(new_h) * h) // new_h
    cols = (np.arange(new_w) * w) // new_w
    return a[rows[:, None], cols[None, :]]


def place_on_canvas(img, canvas_h: int = CANVAS_H, canvas_w: int = CANVAS_W,
                    dy: int = 0, dx: int = 0) -> np.ndarray:
    a = as_image(img)
    h, w = a.shape
    if h > canvas_h or w > canvas_w:
        raise ImageError(f"image {a.shape} larger than canvas {(canvas_h, canvas_w)}")
    if not (0 <= dy <= canvas_h - h and 0 <= dx <= canvas_w - w):
        raise ImageError(f"offset {(dy, dx)} places {a.shape} outside canvas")
    out = blank(canvas_h, canvas_w)
    out[dy:dy + h, dx:dx + w] = a
    return out


def fit_to_canvas(img, canvas_h: int = CANVAS_H, canvas_w: int = CANVAS_W) -> np.ndarray:
    """Binarize, shrink (aspect-preserving) if needed, and place top-left."""
    a = binarize(img)
    h, w = a.shape
    if h > canvas_h or w > canvas_w:
        s = min(canvas_h / h, canvas_w / w)
        a = resize_nn(a, max(1, int(h * s)), max(1, int(w * s)))
    return place_on_canvas(a, canvas_h, canvas_w)


# -- PGM (binary P5, maxval 255) -------------------------------------------

def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    i, n = 0, len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise PGMMalformedHeader("header ended early")
        j = i
        while j < n and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
            j += 1
        tokens.append(buf[i:j])
        i = j
    # exactly one whitespace byte separates maxval from the payload
    if i >= n or not buf[i:i + 1].isspace():
        raise PGMMalformedHeader("missing whitespace after maxval")
    return tokens, i + 1


def decode_pgm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic != b"P5":
        if magic[:1] == b"P":
            raise PGMUnsupportedFormat(f"unsupported netpbm variant {magic!r}; only P5 is read")
        raise PGMMalformedHeader("not a PGM file")
    tokens, start = _header_tokens(buf[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PGMMalformedHeader(f"non-numeric header field in {tokens!r}") from exc
    if width < 1 or height < 1:
        raise PGMMalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PGMBadMaxval(f"maxval {maxval} unsupported; expected 255")
    payload = buf[2 + start:]
    if len(payload) < width * height:
        raise PGMTruncated(f"payload has {len(payload)} bytes, need {width * height}")
    return np.frombuffer(payload[:width * height], dtype=np.uint8).reshape(height, width).copy()


def encode_pgm(img) -> bytes:
    a = as_image(img)
    h, w = a.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(a).tobytes()


def pgm_read(path: str | os.PathLike) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes())


def pgm_write(img, path: str | os.PathLike) -> None:
    Path(path).write_bytes(encode_pgm(img))
