import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import naive_bin, naive_region_counts

from docsig.errors import InvalidParameter
from docsig.features import PyramidSpec, Region, power_normalize, l1_normalize
from docsig.imgproc import BinaryImage, GrayImage
from docsig.runlength import (
    QuantizerSpec,
    extract_rl,
    pyramid_rl_counts,
    quantize_lengths,
    quantize_run_length,
    region_rl_counts,
    rl_dimension,
    rl_signature,
)


def full(img):
    return Region(0, 0, img.width, img.height)


@pytest.mark.parametrize("length,expected", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4),
                                             (32, 5), (33, 6), (1000, 6)])
def test_quantize_examples(length, expected):
    assert quantize_run_length(length, QuantizerSpec(7)) == expected


def test_quantize_rejects_zero():
    with pytest.raises(InvalidParameter):
        quantize_run_length(0, QuantizerSpec(7))


@pytest.mark.parametrize("Q", [3, 5, 7, 11, 16])
def test_quantize_vectorised_matches_oracle(Q):
    lengths = np.arange(1, 70000)
    vec = quantize_lengths(lengths, Q)
    ref = np.array([naive_bin(int(n), Q) for n in lengths])
    assert np.array_equal(vec, ref)


def test_all_black_4x4():
    img = BinaryImage(np.ones((4, 4), bool))
    c = region_rl_counts(img, full(img), QuantizerSpec(5)).reshape(4, 2, 5)
    assert c[0, 0].tolist() == [0, 0, 4, 0, 0]
    assert c[1, 0].tolist() == [0, 0, 4, 0, 0]
    assert c[2, 0].tolist() == [2, 2, 3, 0, 0]
    assert c[3, 0].tolist() == [2, 2, 3, 0, 0]
    assert c[:, 1].sum() == 0
    assert c.sum() == 22


def test_single_black_pixel():
    img = BinaryImage(np.ones((1, 1), bool))
    c = region_rl_counts(img, full(img), QuantizerSpec(6)).reshape(4, 2, 6)
    assert np.all(c[:, 0, 0] == 1)
    assert c.sum() == 4


def test_white_row_1x8():
    img = BinaryImage(np.zeros((1, 8), bool))
    c = region_rl_counts(img, full(img), QuantizerSpec(5)).reshape(4, 2, 5)
    assert c[0, 1].tolist() == [0, 0, 0, 1, 0]
    for d in (1, 2, 3):
        assert c[d, 1].tolist() == [8, 0, 0, 0, 0]
    assert c[:, 0].sum() == 0


def test_region_errors():
    img = BinaryImage(np.zeros((4, 4), bool))
    with pytest.raises(InvalidParameter):
        region_rl_counts(img, Region(1, 1, 1, 3), QuantizerSpec(5))
    with pytest.raises(InvalidParameter):
        region_rl_counts(img, Region(0, 0, 5, 4), QuantizerSpec(5))


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.sampled_from([5, 7, 9, 11]), st.integers(0, 2**31))
def test_region_counts_match_oracle(w, h, Q, seed):
    mask = np.random.default_rng(seed).random((h, w)) < 0.5
    img = BinaryImage(mask)
    assert np.array_equal(region_rl_counts(img, full(img), QuantizerSpec(Q)), naive_region_counts(mask, Q))


def test_sub_region_cuts_runs():
    rng = np.random.default_rng(4)
    mask = rng.random((30, 40)) < 0.3
    img = BinaryImage(mask)
    reg = Region(5, 7, 31, 22)
    got = region_rl_counts(img, reg, QuantizerSpec(9))
    assert np.array_equal(got, naive_region_counts(mask[7:22, 5:31], 9))


def test_horizontal_run_conservation():
    rng = np.random.default_rng(5)
    mask = rng.random((17, 23)) < 0.5
    img = BinaryImage(mask)
    c = region_rl_counts(img, full(img), QuantizerSpec(7)).reshape(4, 2, 7)
    horiz = c[0].sum()
    assert 17 <= horiz <= 17 * 23


def test_signature_dimension_and_norm():
    assert rl_dimension(5, 11) == 10648
    img = BinaryImage(np.random.default_rng(6).random((50, 60)) < 0.4)
    sig = rl_signature(img, PyramidSpec(1), QuantizerSpec(11))
    assert sig.dim == 88
    assert np.dot(sig.values, sig.values) == pytest.approx(1.0, abs=1e-12)
    sig5 = rl_signature(img, PyramidSpec(5), QuantizerSpec(11))
    assert sig5.dim == 10648
    assert np.linalg.norm(sig5.values) == pytest.approx(1.0, abs=1e-12)


def test_signature_deterministic():
    mask = np.random.default_rng(7).random((40, 40)) < 0.5
    a = rl_signature(BinaryImage(mask), PyramidSpec(3), QuantizerSpec(9))
    b = rl_signature(BinaryImage(mask.copy()), PyramidSpec(3), QuantizerSpec(9))
    assert np.array_equal(a.values, b.values)


def test_upscaled_image_still_unit_norm():
    mask = np.random.default_rng(8).random((20, 30)) < 0.5
    big = np.repeat(np.repeat(mask, 2, axis=0), 2, axis=1)
    a = pyramid_rl_counts(BinaryImage(mask), PyramidSpec(2), QuantizerSpec(7))
    b = pyramid_rl_counts(BinaryImage(big), PyramidSpec(2), QuantizerSpec(7))
    assert not np.array_equal(a, b)
    sig = rl_signature(BinaryImage(big), PyramidSpec(2), QuantizerSpec(7))
    assert np.linalg.norm(sig.values) == pytest.approx(1.0, abs=1e-12)


def test_pyramid_first_layer_block():
    img = BinaryImage(np.random.default_rng(9).random((33, 47)) < 0.5)
    q = QuantizerSpec(8)
    l1 = pyramid_rl_counts(img, PyramidSpec(1), q)
    l4 = pyramid_rl_counts(img, PyramidSpec(4), q)
    assert np.array_equal(l4[: q.region_dim], l1)
    assert l4.size == 57 * q.region_dim


def test_tiny_image_gets_zero_blocks():
    img = BinaryImage(np.ones((3, 3), bool))
    sig = rl_signature(img, PyramidSpec(5), QuantizerSpec(5))
    assert sig.dim == 121 * 40
    assert np.isfinite(sig.values).all()
    assert np.linalg.norm(sig.values) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=50).filter(lambda v: sum(v) > 0))
def test_power_norm_identity(values):
    v = power_normalize(l1_normalize(np.array(values)), 0.5)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)


def test_extract_rl_pipeline():
    g = GrayImage(np.random.default_rng(10).random((300, 400)))
    sig = extract_rl(g, S=1, L=2, Q=7)
    assert sig.dim == 5 * 56
    assert sig.config == {"S": 1, "L": 2, "Q": 7}
    with pytest.raises(InvalidParameter):
        extract_rl(g, S=9)
