from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inkstrip import imgcore as ic

from conftest import binary_rasters, random_binary


def test_binarize_threshold_rule():
    img = np.array([[0, 127, 128, 255]], dtype=np.uint8)
    assert ic.binarize(img).tolist() == [[0, 0, 255, 255]]
    assert np.all(ic.binarize(np.full((4, 4), 128, np.uint8)) == 255)


@given(arrays(np.uint8, (6, 9)))
def test_binarize_idempotent(img):
    once = ic.binarize(img)
    assert ic.is_binary(once)
    assert np.array_equal(ic.binarize(once), once)


def test_superimpose_cases():
    clean = np.array([[255, 0, 0]], np.uint8)
    art = np.array([[0, 255, 0]], np.uint8)
    assert ic.superimpose(clean, art).tolist() == [[0, 0, 0]]
    assert np.array_equal(ic.superimpose(clean, ic.blank(1, 3)), clean)
    with pytest.raises(ic.ImageError):
        ic.superimpose(clean, ic.blank(2, 3))


@given(binary_rasters(), binary_rasters(), binary_rasters())
def test_superimpose_lattice(a, b, c):
    assert np.array_equal(ic.superimpose(a, b), ic.superimpose(b, a))
    assert np.array_equal(ic.superimpose(ic.superimpose(a, b), c), ic.superimpose(a, ic.superimpose(b, c)))
    assert np.array_equal(ic.superimpose(a, a), a)


def test_translate_examples():
    img = random_binary(np.random.default_rng(0), (4, 5))
    assert np.array_equal(ic.translate_and_crop(img, 0, 0, 4, 5), img)
    dot = np.zeros((1, 1), np.uint8)
    out = ic.translate_and_crop(dot, 2, 3, 4, 5)
    assert ic.black_set(out) == {(2, 3)}
    assert np.all(ic.translate_and_crop(img, 4, 0, 4, 5) == 255)
    assert np.all(ic.translate_and_crop(img, 0, -5, 4, 5) == 255)


@given(binary_rasters(5, 6), st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4))
def test_translate_composition(img, dy1, dx1, dy2, dx2):
    # a canvas big enough that the intermediate never crops: pad the source first
    big = ic.translate_and_crop(img, 10, 10, 25, 26)
    step = ic.translate_and_crop(ic.translate_and_crop(big, dy1, dx1, 25, 26), dy2, dx2, 25, 26)
    direct = ic.translate_and_crop(big, dy1 + dy2, dx1 + dx2, 25, 26)
    assert np.array_equal(step, direct)


def test_translate_oracle_per_pixel():
    rng = np.random.default_rng(3)
    art = random_binary(rng, (5, 7))
    for dy, dx in [(-3, 2), (1, -6), (4, 4), (0, 0)]:
        out = ic.translate_and_crop(art, dy, dx, 6, 6)
        for r in range(6):
            for c in range(6):
                sr, sc = r - dy, c - dx
                want = art[sr, sc] if 0 <= sr < 5 and 0 <= sc < 7 else 255
                assert out[r, c] == want


def test_derive_mask_truth_table():
    clean = np.array([[255, 0, 0, 255]], np.uint8)
    art = np.array([[0, 0, 255, 255]], np.uint8)
    assert ic.derive_mask(clean, art).tolist() == [[0, 255, 255, 255]]
    assert np.all(ic.derive_mask(clean, ic.blank(1, 4)) == 255)


def test_derive_mask_rejects_gray():
    with pytest.raises(ic.ImageError):
        ic.derive_mask(np.full((2, 2), 100, np.uint8), ic.blank(2, 2))
    with pytest.raises(ic.ImageError):
        ic.derive_mask(ic.blank(2, 2), ic.blank(2, 3))


@given(binary_rasters(), binary_rasters())
def test_mask_set_identity(c, a):
    a_set, b_set = ic.black_set(a), ic.black_set(c)
    assert ic.black_set(ic.derive_mask(c, a)) == a_set - (a_set & b_set)


def test_round_trip_1000_pairs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        c = random_binary(rng, (16, 24), rng.uniform(0.05, 0.6))
        a = random_binary(rng, (16, 24), rng.uniform(0.05, 0.6))
        out = ic.erase_with_mask(ic.superimpose(c, a), ic.derive_mask(c, a))
        assert np.array_equal(out, c)


def test_erase_with_mask_cases():
    d = random_binary(np.random.default_rng(1), (3, 4))
    assert np.array_equal(ic.erase_with_mask(d, ic.blank(3, 4)), d)
    assert np.all(ic.erase_with_mask(d, np.zeros((3, 4), np.uint8)) == 255)


def test_resize_nn():
    img = random_binary(np.random.default_rng(2), (32, 128))
    assert np.array_equal(ic.resize_nn(img, 32, 128), img)
    checker = np.array([[0, 255], [255, 0]], np.uint8)
    assert np.array_equal(ic.resize_nn(checker, 4, 4), np.kron(checker // 255, np.ones((2, 2), np.uint8)) * 255)
    assert ic.resize_nn(img, 16, 64).shape == (16, 64)
    assert ic.is_binary(ic.resize_nn(img, 13, 50))


def test_place_on_canvas():
    img = random_binary(np.random.default_rng(5), (32, 128))
    assert np.array_equal(ic.place_on_canvas(img), img)
    out = ic.place_on_canvas(np.zeros((1, 1), np.uint8), dy=31, dx=127)
    assert ic.black_set(out) == {(31, 127)}
    with pytest.raises(ic.ImageError):
        ic.place_on_canvas(np.zeros((1, 1), np.uint8), dx=129)
    with pytest.raises(ic.ImageError):
        ic.place_on_canvas(np.zeros((33, 10), np.uint8))


def test_fit_to_canvas_shrinks_and_binarizes():
    big = np.full((64, 100), 40, np.uint8)
    out = ic.fit_to_canvas(big)
    assert out.shape == (32, 128) and ic.is_binary(out)
    assert ic.black_set(out) == {(r, c) for r in range(32) for c in range(50)}


def test_pgm_round_trip(tmp_path):
    img = np.arange(6, dtype=np.uint8).reshape(2, 3) * 40
    p = tmp_path / "x.pgm"
    ic.pgm_write(img, p)
    assert p.read_bytes() == b"P5\n3 2\n255\n" + img.tobytes()
    back = ic.pgm_read(p)
    assert back.dtype == np.uint8 and np.array_equal(back, img)


@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9))))
def test_pgm_bytes_round_trip(img):
    buf = ic.encode_pgm(img)
    assert ic.encode_pgm(ic.decode_pgm(buf)) == buf


def test_pgm_comments_tolerated():
    buf = b"P5\n# made by hand\n2 1\n255\n\x00\xff"
    assert ic.decode_pgm(buf).tolist() == [[0, 255]]


@pytest.mark.parametrize("buf, err", [
    (b"P2\n2 1\n255\n0 255", ic.PGMUnsupportedFormat),
    (b"P6\n1 1\n255\n\x00\x00\x00", ic.PGMUnsupportedFormat),
    (b"P5\n2 1\n65535\n\x00\x00\x00\x00", ic.PGMBadMaxval),
    (b"P5\n2 1\n255\n\x00", ic.PGMTruncated),
    (b"P5\n2 x\n255\n\x00\x00", ic.PGMMalformedHeader),
    (b"P5\n2", ic.PGMMalformedHeader),
    (b"GIF89a", ic.PGMMalformedHeader),
])
def test_pgm_errors_are_distinct(buf, err):
    with pytest.raises(err):
        ic.decode_pgm(buf)
