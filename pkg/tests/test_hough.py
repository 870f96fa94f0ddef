from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inkstrip import hough
from inkstrip import imgcore as ic
from inkstrip import synth

from conftest import binary_rasters


def test_blank_has_no_lines():
    assert hough.hough_lines(ic.blank()) == []
    cleaned, mask = hough.hough_erase(ic.blank())
    assert np.all(cleaned == 255) and np.all(mask == 255)


def test_horizontal_row():
    img = ic.blank()
    img[20, :] = 0
    top = hough.hough_lines(img)[0]
    assert (top.theta, top.rho, top.votes) == (90.0, 20.0, 128)


def test_vertical_column():
    img = ic.blank()
    img[:, 40] = 0
    lines = hough.hough_lines(img, vote_threshold=20)
    assert (lines[0].theta, lines[0].rho, lines[0].votes) == (0.0, 40.0, 32)
    assert hough.hough_lines(img) == []  # 32 votes is below the default 0.4 x width


def test_accumulator_brute_force():
    rng = np.random.default_rng(0)
    img = np.where(rng.random((6, 9)) < 0.2, 0, 255).astype(np.uint8)
    acc, rhos, thetas = hough.accumulate(img, theta_step=15)
    for ti, t in enumerate(thetas):
        for ri, r in enumerate(rhos):
            want = sum(1 for y, x in zip(*np.nonzero(img == 0))
                       if round(x * math.cos(math.radians(t)) + y * math.sin(math.radians(t))) == r)
            assert acc[ti, ri] == want


def test_thick_line_rho_centred_and_single():
    img = ic.blank()
    img[10:13, :] = 0
    lines = hough.hough_lines(img)
    assert len(lines) == 1
    assert (lines[0].theta, lines[0].rho) == (90.0, 11.0)
    cleaned, _ = hough.erase_lines(img, lines, 3)
    assert np.all(cleaned == 255)


def test_sorted_by_votes():
    img = ic.blank()
    img[5, :] = 0
    img[25, 10:80] = 0
    lines = hough.hough_lines(img)
    assert [round(l.rho) for l in lines[:2]] == [5, 25]
    assert all(a.votes >= b.votes for a, b in zip(lines, lines[1:]))


def test_erase_empty_line_list_is_identity():
    img = np.where(np.random.default_rng(1).random((32, 128)) < 0.1, 0, 255).astype(np.uint8)
    cleaned, mask = hough.erase_lines(img, [])
    assert np.array_equal(cleaned, img) and np.all(mask == 255)


@given(binary_rasters(16, 32), st.floats(0, 180, exclude_max=True), st.floats(-20, 40), st.floats(0.5, 4))
def test_erase_only_whitens_and_mask_is_exact(img, theta, rho, thickness):
    line = hough.HoughLine(rho, theta, 1)
    cleaned, mask = hough.erase_lines(img, [line], thickness)
    assert np.all(cleaned >= img)
    rr, cc = np.mgrid[0:16, 0:32]
    near = (line.distance(rr, cc) <= thickness / 2) & (img == 0)
    assert np.array_equal(mask == 0, near)
    assert np.array_equal(cleaned == 0, (img == 0) & ~near)


def test_isolated_underline_recovers_clean():
    rng = np.random.default_rng(3)
    clean, _ = synth.gen_pseudo_text(rng, n_glyphs=3)
    line = ic.blank()
    line[0:2, :] = 0
    dirty, mask = synth.assemble(clean, line, (30, 0))
    cleaned, hmask = hough.hough_erase(dirty)
    assert np.array_equal(cleaned, clean)
    assert np.array_equal(hmask, mask)


def test_overlapping_underline_takes_text_pixels():
    rng = np.random.default_rng(3)
    clean, _ = synth.gen_pseudo_text(rng, n_glyphs=6)
    rows = np.nonzero((clean == 0).any(axis=1))[0]
    r = int(rows[len(rows) // 2])
    line = ic.blank()
    line[0, :] = 0
    dirty, mask, placed = synth.assemble_full(clean, line, (r, 0))
    _, hmask = hough.hough_erase(dirty)
    overlap = (placed == 0) & (clean == 0)
    assert overlap.any()
    assert np.all(hmask[overlap] == 0)
    assert np.count_nonzero(hmask != mask) > 0


def test_line_contains():
    line = hough.HoughLine(20.0, 90.0, 0)
    assert line.contains(20, 77) and not line.contains(21, 77)
