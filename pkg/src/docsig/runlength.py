"""RunLength histogram signatures of binary document images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .features import FeatureVector, PyramidSpec, Region, l1_normalize, power_normalize
from .imgproc import BinaryImage, GrayImage, binarize, resize_max_pixels

DIRECTIONS = ("horizontal", "vertical", "diagonal", "antidiagonal")

# target resolutions indexed by the S parameter; S0 keeps the original size
SIZE_TARGETS = {0: None, 1: 50_000, 2: 100_000, 3: 250_000, 4: 500_000, 5: 1_000_000}

_PAD = np.int8(-1)


@dataclass(frozen=True)
class QuantizerSpec:
    """Logarithmic length bins: [1], [2], [3-4], [5-8], ... , [>= 2**(Q-2) + 1]."""

    Q: int = 11

    def __post_init__(self):
        if not 3 <= self.Q <= 16:
            raise InvalidParameter(f"Q must be in 3..16, got {self.Q}")

    @property
    def region_dim(self) -> int:
        return 8 * self.Q


def quantize_run_length(length: int, quant: QuantizerSpec) -> int:
    if length < 1:
        raise InvalidParameter(f"run length must be >= 1, got {length}")
    if length == 1:
        return 0
    return min(quant.Q - 1, (int(length) - 1).bit_length())


def quantize_lengths(lengths: np.ndarray, Q: int) -> np.ndarray:
    """Vectorised :func:`quantize_run_length` for integer arrays of lengths >= 1."""
    lengths = np.asarray(lengths, dtype=np.int64)
    # frexp gives n = m * 2**e with m in [0.5, 1), so floor(log2 n) = e - 1 exactly
    _, e = np.frexp(np.maximum(lengths - 1, 1).astype(np.float64))
    bins = np.minimum(Q - 1, e.astype(np.int64))
    return np.where(lengths == 1, 0, bins)


def _line_runs(lines: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Maximal runs along each row of an int8 array padded with -1.

    Returns (lengths, colours) of the non-padding runs; runs never cross rows.
    """
    if lines.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int8)
    start = np.ones(lines.shape, dtype=bool)
    start[:, 1:] = lines[:, 1:] != lines[:, :-1]
    idx = np.flatnonzero(start)
    lengths = np.diff(np.append(idx, lines.size))
    colours = lines.ravel()[idx]
    keep = colours != _PAD
    return lengths[keep], colours[keep]


def _diagonal_lines(a: np.ndarray) -> np.ndarray:
    """Rearrange so each row holds one top-left -> bottom-right diagonal."""
    h, w = a.shape
    out = np.full((h + w - 1, h), _PAD, dtype=np.int8)
    r, c = np.indices((h, w))
    out[c - r + h - 1, r] = a
    return out


def _direction_lines(a: np.ndarray):
    yield a
    yield np.ascontiguousarray(a.T)
    yield _diagonal_lines(a)
    yield _diagonal_lines(a[:, ::-1])


def region_rl_counts(image: BinaryImage, region: Region, quant: QuantizerSpec) -> np.ndarray:
    """Raw run counts of one region, layout [dir][black(Q), white(Q)] for the 4 directions."""
    if region.empty:
        raise InvalidParameter(f"empty region {region}")
    if region.x0 < 0 or region.y0 < 0 or region.x1 > image.width or region.y1 > image.height:
        raise InvalidParameter(f"region {region} outside {image.width}x{image.height} image")
    a = image.pixels[region.y0 : region.y1, region.x0 : region.x1].astype(np.int8)
    Q = quant.Q
    out = np.zeros(8 * Q, dtype=np.int64)
    for d, lines in enumerate(_direction_lines(a)):
        lengths, colours = _line_runs(lines)
        bins = quantize_lengths(lengths, Q)
        out[2 * d * Q : (2 * d + 1) * Q] = np.bincount(bins[colours == 1], minlength=Q)
        out[(2 * d + 1) * Q : (2 * d + 2) * Q] = np.bincount(bins[colours == 0], minlength=Q)
    return out


def pyramid_rl_counts(image: BinaryImage, pyramid: PyramidSpec, quant: QuantizerSpec) -> np.ndarray:
    """Concatenated raw counts over every pyramid region; empty regions give zero blocks."""
    blocks = []
    for region in pyramid.regions(image.width, image.height):
        if region.empty:
            blocks.append(np.zeros(quant.region_dim, dtype=np.int64))
        else:
            blocks.append(region_rl_counts(image, region, quant))
    return np.concatenate(blocks)


def rl_signature(image: BinaryImage, pyramid: PyramidSpec, quant: QuantizerSpec,
                 alpha: float = 0.5, config: dict | None = None) -> FeatureVector:
    counts = pyramid_rl_counts(image, pyramid, quant)
    values = power_normalize(l1_normalize(counts.astype(np.float64)), alpha)
    if config is None:
        config = {"L": pyramid.levels, "Q": quant.Q}
    return FeatureVector(values, kind="RL", config=config)


def rl_dimension(levels: int, Q: int) -> int:
    return PyramidSpec(levels).region_count * QuantizerSpec(Q).region_dim


def extract_rl(gray: GrayImage, S: int = 0, L: int = 5, Q: int = 11,
               threshold: float = 0.5) -> FeatureVector:
    """Full RL pipeline: resize the grayscale image, binarize, then histogram."""
    if S not in SIZE_TARGETS:
        raise InvalidParameter(f"S must be one of {sorted(SIZE_TARGETS)}, got {S}")
    target = SIZE_TARGETS[S]
    if target is not None:
        gray = resize_max_pixels(gray, target)
    image = binarize(gray, threshold)
    return rl_signature(image, PyramidSpec(L), QuantizerSpec(Q), config={"S": S, "L": L, "Q": Q})
