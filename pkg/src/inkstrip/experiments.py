"""Desk-scale experiments shared by ``scripts/`` and the acceptance suite."""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation, hough, synth, trainer, unet
from .unet import UNetParams


@dataclass
class DeskRunConfig:
    data_seed: int = 2026
    count: int = 450
    split: float = 0.9
    split_seed: int = 0
    init_seed: int = 0
    channels: int = 16
    train: trainer.TrainConfig = field(default_factory=lambda: trainer.TrainConfig(
        lr=1e-3, batch_size=16, iterations=1000, seed=1, eval_every=100))


@dataclass
class DeskRunResult:
    params: UNetParams
    history: trainer.TrainHistory
    heldout: trainer.Dataset
    heldout_seg_error: float
    trivial_seg_error: float  # all-not-artifact prediction on the held-out split
    seconds: float

    @property
    def smoothed_loss(self) -> tuple[float, float]:
        return self.history.smoothed()


def trivial_error(data: trainer.Dataset) -> float:
    blank = np.full(data.mask.shape[1:], 255, np.uint8)
    return float(np.mean([evaluation.seg_error(blank, m) for m in data.mask]))


def desk_run(out_dir: str | os.PathLike, cfg: DeskRunConfig | None = None, log=None) -> DeskRunResult:
    """Generate procedural data, train from scratch, and score the held-out split."""
    cfg = cfg or DeskRunConfig()
    out = Path(out_dir)
    gen = synth.GenConfig(master_seed=cfg.data_seed, count=cfg.count)
    data = trainer.load_dataset(synth.generate_dataset(gen, out / "data"))
    tr_idx, ho_idx = trainer.split_indices(len(data), cfg.split, cfg.split_seed)
    train_set, held = data.subset(tr_idx), data.subset(ho_idx)
    params = unet.init_params(np.random.default_rng(cfg.init_seed), cfg.channels)
    t0 = time.perf_counter()
    params, history = trainer.train(params, train_set, cfg.train, heldout=held, log=log)
    seconds = time.perf_counter() - t0
    trainer.save_checkpoint(params, out / "ck.bin")
    history.write_csv(out / "history.csv")
    return DeskRunResult(params, history, held, trainer.heldout_seg_error(params, held),
                         trivial_error(held), seconds)


# -- Hough versus the learned eraser on underlines ---------------------------------

def underline_samples(n_each: int = 100, seed: int = 77) -> tuple[list[synth.Sample], list[synth.Sample]]:
    """First ``n_each`` underline samples whose artifact misses / hits the text ink."""
    cfg = synth.GenConfig(master_seed=seed, count=0, kind_mix={"underline": 1.0})
    apart, overlap = [], []
    i = 0
    while len(apart) < n_each or len(overlap) < n_each:
        s = synth.make_sample(cfg, i)
        i += 1
        hit = bool(np.any((s.artifact == 0) & (s.clean == 0)))
        bucket = overlap if hit else apart
        if len(bucket) < n_each:
            bucket.append(s)
    return apart, overlap


@dataclass
class HoughComparison:
    hough_seg_error: float
    model_seg_error: float | None
    detected: int  # samples with at least one detected line
    overlap_pixels: int  # A∩B pixels lying on detected lines
    overlap_pixels_in_mask: int


def compare_on(samples: list[synth.Sample], params: UNetParams | None = None,
               thickness: float = 3.0) -> HoughComparison:
    h_err, detected, on_line, in_mask = [], 0, 0, 0
    for s in samples:
        lines = hough.hough_lines(s.dirty)
        _, hmask = hough.erase_lines(s.dirty, lines, thickness)
        h_err.append(evaluation.seg_error(hmask, s.mask))
        detected += bool(lines)
        rr, cc = np.nonzero((s.artifact == 0) & (s.clean == 0))
        near = np.zeros(rr.shape, bool)
        for line in lines:
            near |= line.distance(rr, cc) <= thickness / 2.0
        on_line += int(near.sum())
        in_mask += int(np.count_nonzero(hmask[rr[near], cc[near]] == 0))
    model = None
    if params is not None:
        pred = unet.predict_masks(params, np.stack([s.dirty for s in samples]))
        model = float(np.mean([evaluation.seg_error(p, s.mask) for p, s in zip(pred, samples)]))
    return HoughComparison(float(np.mean(h_err)), model, detected, on_line, in_mask)
