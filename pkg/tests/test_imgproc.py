import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from docsig.errors import InvalidImage, InvalidParameter
from docsig.imgproc import (
    BinaryImage,
    GrayImage,
    binarize,
    downscale_sqrt2,
    resize_max_pixels,
    to_luminance,
)


def test_luminance_equal_channels():
    g = to_luminance(np.full((4, 5, 3), 0.5))
    np.testing.assert_allclose(g.pixels, 0.5, atol=1e-15)


def test_luminance_white_and_red():
    assert np.all(to_luminance(np.ones((2, 2, 3))).pixels == 1.0)
    red = np.zeros((1, 1, 3))
    red[0, 0, 0] = 1.0
    assert to_luminance(red).pixels[0, 0] == pytest.approx(0.299)


def test_luminance_passthrough_and_errors():
    a = np.random.default_rng(0).random((3, 7))
    assert np.array_equal(to_luminance(a).pixels, a)
    with pytest.raises(InvalidImage):
        to_luminance(np.zeros((0, 4)))
    with pytest.raises(InvalidImage):
        to_luminance(np.zeros((0, 4, 3)))


def test_gray_image_invariants():
    g = GrayImage(np.zeros((3, 4)))
    assert (g.width, g.height, g.data.size) == (4, 3, 12)
    with pytest.raises(InvalidImage):
        GrayImage(np.full((2, 2), 1.5))


@pytest.mark.parametrize("value,expected", [(0.6, False), (0.0, True), (0.5, False)])
def test_binarize_examples(value, expected):
    b = binarize(GrayImage(np.full((3, 3), value)), 0.5)
    assert np.all(b.pixels == expected)


def test_binarize_bad_threshold():
    with pytest.raises(InvalidParameter):
        binarize(GrayImage(np.zeros((2, 2))), 1.5)


@given(st.floats(min_value=1e-6, max_value=1.0))
def test_binarize_idempotent(threshold):
    rng = np.random.default_rng(1)
    b = binarize(GrayImage(rng.random((6, 6))), 0.5)
    # white=1, black=0 as luminance
    again = binarize(GrayImage(np.where(b.pixels, 0.0, 1.0)), threshold)
    assert again == b


def test_resize_examples():
    g = GrayImage(np.zeros((1000, 2000)))
    r = resize_max_pixels(g, 500_000)
    assert (r.width, r.height) == (1000, 500)
    small = GrayImage(np.zeros((400, 400)))
    assert resize_max_pixels(small, 250_000) is small
    sq = resize_max_pixels(GrayImage(np.zeros((1000, 1000))), 500_000)
    assert (sq.width, sq.height) == (707, 707)
    assert sq.width * sq.height <= 500_000


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 50_000))
def test_resize_pixel_budget(w, h, max_pixels):
    g = GrayImage(np.zeros((h, w)))
    r = resize_max_pixels(g, max_pixels)
    if w * h <= max_pixels:
        assert r is g
    else:
        assert r.width * r.height <= max_pixels + 2 * max(w, h)
        assert r.width <= w and r.height <= h


def test_resize_preserves_range():
    rng = np.random.default_rng(3)
    g = GrayImage(rng.random((123, 77)))
    r = resize_max_pixels(g, 2000)
    assert r.pixels.min() >= g.pixels.min() - 1e-12
    assert r.pixels.max() <= g.pixels.max() + 1e-12


def test_downscale_sqrt2():
    one = downscale_sqrt2(GrayImage(np.zeros((1, 1))))
    assert (one.width, one.height) == (1, 1)
    r = downscale_sqrt2(GrayImage(np.zeros((100, 100))))
    assert (r.width, r.height) == (71, 71)
    twice = downscale_sqrt2(downscale_sqrt2(GrayImage(np.zeros((200, 200)))))
    assert abs(twice.width - 100) <= 1 and abs(twice.height - 100) <= 1


def test_binary_image_rejects_empty():
    with pytest.raises(InvalidImage):
        BinaryImage(np.zeros((0, 3), bool))
