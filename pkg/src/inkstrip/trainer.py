"""Class balancing, RMSProp, the training loop and the checkpoint format."""
from __future__ import annotations

import csv
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import imgcore, synth
from .netcore import Param
from .unet import UNet, UNetParams, mask_to_labels, predict_masks, tensor_plan, to_input

MAGIC = b"DEINK001"
RMS_SUFFIX = ".rms"


@dataclass
class TrainConfig:
    lr: float = 1e-3
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    batch_size: int = 16
    iterations: int = 0
    seed: int = 0
    augment: bool = False
    scale_range: tuple[float, float] = (0.8, 1.0)
    eval_every: int = 100

    def validate(self) -> "TrainConfig":
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0 < self.rms_decay < 1:
            raise ValueError("rms_decay must lie in (0, 1)")
        if not self.rms_eps > 0:
            raise ValueError("rms_eps must be > 0")
        if self.batch_size < 1 or self.iterations < 0 or self.eval_every < 1:
            raise ValueError("batch_size/eval_every must be >= 1 and iterations >= 0")
        return self


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    heldout: list[tuple[int, float]] = field(default_factory=list)  # (iteration, seg error %)

    def smoothed(self, window: int = 20) -> tuple[float, float]:
        """Mean loss over the first and the last ``window`` iterations."""
        if not self.losses:
            raise ValueError("empty history")
        w = max(1, min(window, len(self.losses)))
        return float(np.mean(self.losses[:w])), float(np.mean(self.losses[-w:]))

    def write_csv(self, path: str | os.PathLike) -> None:
        held = dict(self.heldout)
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["iter", "loss", "heldout_seg_error"])
            for i, loss in enumerate(self.losses, start=1):
                out.writerow([i, repr(loss), repr(held[i]) if i in held else ""])


@dataclass
class Dataset:
    ids: list[str]
    dirty: np.ndarray  # (n, h, w) uint8
    mask: np.ndarray
    clean: np.ndarray
    kinds: list[str]
    transcripts: list[str | None]

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = list(idx)
        return Dataset([self.ids[i] for i in idx], self.dirty[idx], self.mask[idx], self.clean[idx],
                       [self.kinds[i] for i in idx], [self.transcripts[i] for i in idx])


def load_dataset(manifest: str | os.PathLike) -> Dataset:
    """Read and validate every record of a manifest into stacked arrays."""
    manifest = Path(manifest)
    recs = synth.read_manifest(manifest)
    cleans, dirties, masks = [], [], []
    for rec in recs:
        c, d, m = synth.load_record(manifest.parent, rec)
        synth.check_sample(c, d, m)
        cleans.append(c)
        dirties.append(d)
        masks.append(m)

    def stack(xs):
        return np.stack(xs) if xs else np.empty((0, imgcore.CANVAS_H, imgcore.CANVAS_W), np.uint8)

    return Dataset([r["id"] for r in recs], stack(dirties), stack(masks), stack(cleans),
                   [r.get("kind", "") for r in recs], [r.get("transcript") for r in recs])


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle of ``range(n)`` cut into ``round(fraction * n)`` train / rest held-out."""
    if not 0 < fraction <= 1:
        raise ValueError("split fraction must lie in (0, 1]")
    order = np.random.default_rng(seed).permutation(n)
    k = int(round(fraction * n))
    return np.sort(order[:k]), np.sort(order[k:])


# -- balancing -------------------------------------------------------------

def class_frequencies(masks: Iterable[np.ndarray]) -> tuple[float, float]:
    """``f_c`` = pixels of class c / pixels of the images that contain class c.

    Class 0 is not-artifact (mask 255), class 1 is artifact (mask 0).
    """
    count = [0, 0]
    total = [0, 0]
    seen = False
    for m in masks:
        seen = True
        art = int(np.count_nonzero(np.asarray(m) == imgcore.BLACK))
        rest = m.size - art
        for c, k in ((0, rest), (1, art)):
            if k:
                count[c] += k
                total[c] += m.size
    if not seen:
        raise ValueError("median_freq_weights needs at least one mask")
    if not (total[0] and total[1]):
        raise ValueError("both classes must be present in at least one mask")
    return count[0] / total[0], count[1] / total[1]


def median_freq_weights(masks: Iterable[np.ndarray]) -> tuple[float, float]:
    """Median frequency balancing: ``w_c = median(f) / f_c``; the median of two is their midpoint."""
    f0, f1 = class_frequencies(masks)
    mid = (f0 + f1) / 2.0
    return mid / f0, mid / f1


# -- optimisation ------------------------------------------------------------

def rmsprop_step(params: Iterable[Param], cfg: TrainConfig) -> None:
    """``v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)``; zeroes grads."""
    rho, lr, eps = cfg.rms_decay, cfg.lr, cfg.rms_eps
    for p in params:
        g = p.grad
        p.rms *= rho
        p.rms += (1.0 - rho) * g * g
        p.value -= lr * g / (np.sqrt(p.rms) + eps)
        p.zero_grad()


def heldout_seg_error(params: UNetParams, data: Dataset) -> float:
    from .evaluation import seg_error

    if not len(data):
        return float("nan")
    pred = predict_masks(params, data.dirty)
    return float(np.mean([seg_error(p, t) for p, t in zip(pred, data.mask)]))


def _augment_batch(rng: np.random.Generator, dirty: np.ndarray, mask: np.ndarray,
                   scale_range: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    out_d, out_m = np.empty_like(dirty), np.empty_like(mask)
    canvas = dirty.shape[1:]
    for i in range(len(dirty)):
        scale, dy, dx = synth.draw_augmentation(rng, canvas, scale_range, canvas)
        out_d[i], out_m[i] = synth.transform_rasters([dirty[i], mask[i]], scale, dy, dx, canvas)
    return out_d, out_m


def train(params: UNetParams, data: Dataset | str | os.PathLike, cfg: TrainConfig,
          heldout: Dataset | None = None, log=None) -> tuple[UNetParams, TrainHistory]:
    """Optimise ``params`` in place; a pure function of (params, data, cfg)."""
    cfg.validate()
    if not isinstance(data, Dataset):
        data = load_dataset(data)
    if not len(data):
        raise ValueError("training set is empty")
    history = TrainHistory()
    if cfg.iterations == 0:
        return params, history
    weights = median_freq_weights(data.mask)
    rng = np.random.default_rng(cfg.seed)
    net = UNet(params)
    order: list[int] = []
    dtype = params.dtype
    with threadpool_limits(limits=1):
        for it in range(1, cfg.iterations + 1):
            if not order:
                order = rng.permutation(len(data)).tolist()
            idx, order = order[:cfg.batch_size], order[cfg.batch_size:]
            dirty, mask = data.dirty[idx], data.mask[idx]
            if cfg.augment:
                dirty, mask = _augment_batch(rng, dirty, mask, cfg.scale_range)
            loss = net.loss_and_grad(to_input(dirty, dtype), mask_to_labels(mask), weights)
            rmsprop_step(params.values(), cfg)
            history.losses.append(loss)
            if heldout is not None and len(heldout) and (it % cfg.eval_every == 0 or it == cfg.iterations):
                history.heldout.append((it, heldout_seg_error(params, heldout)))
            if log is not None and (it % cfg.eval_every == 0 or it == cfg.iterations):
                held = f" heldout_seg_error={history.heldout[-1][1]:.3f}%" if history.heldout else ""
                log(f"iter {it} loss={loss:.5f}{held}")
    return params, history


# -- checkpoints ---------------------------------------------------------------

class CheckpointError(ValueError):
    pass


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointTruncated(CheckpointError):
    pass


class PlanMismatchError(CheckpointError):
    pass


def encode_checkpoint(params: UNetParams, include_rms: bool = False) -> bytes:
    tensors = [(name, p.value) for name, p in params.items()]
    if include_rms:
        tensors += [(name + RMS_SUFFIX, p.rms) for name, p in params.items()]
    chunks = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_checkpoint(params: UNetParams, path: str | os.PathLike, include_rms: bool = False) -> None:
    Path(path).write_bytes(encode_checkpoint(params, include_rms))


def decode_checkpoint(buf: bytes, expect_channels: int | None = None) -> UNetParams:
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointMagicError("not an inkstrip checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointTruncated(f"checkpoint truncated at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    order = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        size = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
        tensors[name] = arr
        order.append(name)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last tensor")
    first = tensors.get("D1a.weight")
    if first is None or first.ndim != 4:
        raise PlanMismatchError("checkpoint lacks a valid D1a.weight tensor")
    channels = int(first.shape[0])
    if expect_channels is not None and channels != expect_channels:
        raise PlanMismatchError(f"checkpoint has C={channels}, expected C={expect_channels}")
    plan = tensor_plan(channels)
    values = [n for n in order if not n.endswith(RMS_SUFFIX)]
    if values != list(plan):
        raise PlanMismatchError(f"tensor names {values} do not match the C={channels} plan")
    params = UNetParams(channels)
    for name, shape in plan.items():
        if tensors[name].shape != shape:
            raise PlanMismatchError(f"{name}: shape {tensors[name].shape}, plan says {shape}")
        rms = tensors.get(name + RMS_SUFFIX)
        if rms is not None and rms.shape != shape:
            raise PlanMismatchError(f"{name}{RMS_SUFFIX}: shape {rms.shape}, plan says {shape}")
        params[name] = Param(tensors[name].copy(), rms=None if rms is None else rms.copy())
    return params


def load_checkpoint(path: str | os.PathLike, expect_channels: int | None = None) -> UNetParams:
    return decode_checkpoint(Path(path).read_bytes(), expect_channels)
