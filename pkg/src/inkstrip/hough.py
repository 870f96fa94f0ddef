"""Classical baseline: (rho, theta) Hough line detection and whole-line erasure.

The erasure deliberately whitens every ink pixel near a detected line, text
or not, which is how a line-removal baseline behaves on overlapping ink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import imgcore


@dataclass(frozen=True)
class HoughLine:
    rho: float  # pixels, signed
    theta: float  # degrees in [0, 180)
    votes: int

    def distance(self, rows, cols) -> np.ndarray:
        t = math.radians(self.theta)
        return np.abs(np.asarray(cols) * math.cos(t) + np.asarray(rows) * math.sin(t) - self.rho)

    def contains(self, row: int, col: int) -> bool:
        return bool(self.distance(row, col) <= 0.5)


def _bins(rr: np.ndarray, cc: np.ndarray, thetas: np.ndarray, rho_step: float, n_rho: int) -> np.ndarray:
    rad = np.deg2rad(thetas)
    rho = cc[:, None] * np.cos(rad)[None, :] + rr[:, None] * np.sin(rad)[None, :]
    return np.rint(rho / rho_step).astype(np.int64) + n_rho


def _grid(shape: tuple[int, int], theta_step: float, rho_step: float) -> tuple[np.ndarray, np.ndarray, int]:
    thetas = np.arange(0.0, 180.0, theta_step)
    n_rho = int(math.ceil(math.hypot(*shape) / rho_step))
    return thetas, np.arange(-n_rho, n_rho + 1) * rho_step, n_rho


def _vote(bins: np.ndarray, n_theta: int, n_r: int) -> np.ndarray:
    if bins.size == 0:
        return np.zeros((n_theta, n_r), dtype=np.int64)
    flat = bins + np.arange(n_theta)[None, :] * n_r
    return np.bincount(flat.ravel(), minlength=n_theta * n_r).reshape(n_theta, n_r)


def accumulate(img, theta_step: float = 1.0, rho_step: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vote every black pixel into the accumulator; returns ``(acc, rhos, thetas_deg)``."""
    a = imgcore.as_image(img)
    thetas, rhos, n_rho = _grid(a.shape, theta_step, rho_step)
    rr, cc = np.nonzero(a == imgcore.BLACK)
    return _vote(_bins(rr, cc, thetas, rho_step, n_rho), len(thetas), len(rhos)), rhos, thetas


def _plateau(row: np.ndarray, r: int) -> tuple[int, int]:
    v, lo, hi = row[r], r, r
    while lo - 1 >= 0 and row[lo - 1] == v:
        lo -= 1
    while hi + 1 < len(row) and row[hi + 1] == v:
        hi += 1
    return lo, hi


def hough_lines(img, theta_step: float = 1.0, rho_step: float = 1.0, vote_threshold: int | None = None,
                nms_window: tuple[float, float] = (5.0, 5.0)) -> list[HoughLine]:
    """Lines with at least ``vote_threshold`` votes, strongest first.

    Peaks are taken greedily. After each accepted peak its voting pixels are
    withdrawn from the accumulator (so a thick line does not also show up as
    a fan of slightly tilted lines), and the ``nms_window`` = ``(rho px,
    theta deg)`` neighbourhood around it is suppressed; theta wraps at 180
    with a rho sign flip. A peak spanning several equal rho bins (a thick
    straight line) reports the centre of that run, and among equal-vote
    peaks the widest run wins, then the lowest theta, then the lowest rho.
    ``vote_threshold`` defaults to 0.4 x image width.
    """
    a = imgcore.as_image(img)
    if vote_threshold is None:
        vote_threshold = int(math.ceil(0.4 * a.shape[1]))
    thetas, rhos, n_rho = _grid(a.shape, theta_step, rho_step)
    n_t, n_r = len(thetas), len(rhos)
    half_r = int(nms_window[0] / rho_step) // 2
    half_t = int(nms_window[1] / theta_step) // 2
    rr, cc = np.nonzero(a == imgcore.BLACK)
    bins = _bins(rr, cc, thetas, rho_step, n_rho)
    alive = np.ones(len(rr), dtype=bool)
    suppressed = np.zeros((n_t, n_r), dtype=bool)
    lines = []
    while alive.any():
        acc = _vote(bins[alive], n_t, n_r)
        acc[suppressed] = 0
        v = int(acc.max())
        if v < max(1, vote_threshold):
            break
        best = None
        for t, r in np.argwhere(acc == v):
            lo, hi = _plateau(acc[t], int(r))
            key = (-(hi - lo), int(t), lo)
            if best is None or key < best[0]:
                best = (key, int(t), lo, hi)
        _, t, lo, hi = best
        lines.append(HoughLine(float((rhos[lo] + rhos[hi]) / 2.0), float(thetas[t]), v))
        alive &= ~((bins[:, t] >= lo) & (bins[:, t] <= hi))
        suppressed[t, lo:hi + 1] = True
        r = (lo + hi) // 2
        for dt in range(-half_t, half_t + 1):
            tt, rc = t + dt, r
            if tt < 0 or tt >= n_t:
                tt %= n_t
                rc = n_r - 1 - r  # rho -> -rho across the wrap
            suppressed[tt, max(0, rc - half_r):rc + half_r + 1] = True
    return lines


def erase_lines(img, lines, thickness: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    """Whiten black pixels within ``thickness / 2`` of any line; mask marks exactly those."""
    a = imgcore.as_image(img)
    hit = np.zeros(a.shape, dtype=bool)
    rr, cc = np.nonzero(a == imgcore.BLACK)
    for line in lines:
        near = line.distance(rr, cc) <= thickness / 2.0
        hit[rr[near], cc[near]] = True
    cleaned = np.where(hit, imgcore.WHITE, a).astype(np.uint8)
    mask = np.where(hit, imgcore.BLACK, imgcore.WHITE).astype(np.uint8)
    return cleaned, mask


def hough_erase(img, vote_threshold: int | None = None, thickness: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    return erase_lines(img, hough_lines(img, vote_threshold=vote_threshold), thickness)
