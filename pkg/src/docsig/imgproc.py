"""Raster operations on decoded images: luminance, thresholding, resampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidImage, InvalidParameter

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Luminance raster, ``pixels[row, col]`` in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.size == 0:
            raise InvalidImage(f"expected a non-empty 2-D raster, got shape {px.shape}")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise InvalidImage("luminance values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.ravel()

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Ink mask; ``True`` marks a black pixel."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=bool)
        if px.ndim != 2 or px.size == 0:
            raise InvalidImage(f"expected a non-empty 2-D mask, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self.pixels.ravel()

    def __eq__(self, other):
        if not isinstance(other, BinaryImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


def to_luminance(raster) -> GrayImage:
    """Convert an (H, W) or (H, W, C) raster with values in [0, 1] to luminance.

    Three- and four-channel inputs use the BT.601 weights on the first three
    channels (alpha is ignored); single-channel inputs pass through.
    """
    arr = np.asarray(raster, dtype=np.float64)
    if arr.size == 0 or arr.ndim not in (2, 3):
        raise InvalidImage(f"cannot interpret raster of shape {arr.shape}")
    if arr.ndim == 3:
        channels = arr.shape[2]
        if channels == 1:
            arr = arr[:, :, 0]
        elif channels in (3, 4):
            r, g, b = arr[:, :, 0], arr[:, :, 1], arr[:, :, 2]
            # same weights, arranged so equal channels map to themselves exactly
            arr = g + LUMA_WEIGHTS[0] * (r - g) + LUMA_WEIGHTS[2] * (b - g)
            arr = np.clip(arr, 0.0, 1.0)
        else:
            raise InvalidImage(f"unsupported channel count {channels}")
    return GrayImage(arr)


def binarize(gray: GrayImage, threshold: float = 0.5) -> BinaryImage:
    if not 0.0 <= threshold <= 1.0:
        raise InvalidParameter(f"threshold must lie in [0, 1], got {threshold}")
    return BinaryImage(gray.pixels < threshold)


def _round_dim(x: float) -> int:
    return max(1, int(math.floor(x + 0.5)))


def _interp_axis(src: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = src.shape[axis]
    if new_len == old_len:
        return src
    # pixel-centre alignment, clamped at the borders
    pos = (np.arange(new_len) + 0.5) * (old_len / new_len) - 0.5
    pos = np.clip(pos, 0.0, old_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, old_len - 1)
    frac = pos - lo
    a = np.take(src, lo, axis=axis)
    b = np.take(src, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = new_len
    frac = frac.reshape(shape)
    return a + (b - a) * frac


def resample_bilinear(gray: GrayImage, width: int, height: int) -> GrayImage:
    px = _interp_axis(gray.pixels, height, axis=0)
    px = _interp_axis(px, width, axis=1)
    return GrayImage(np.clip(px, 0.0, 1.0))


def resize_max_pixels(gray: GrayImage, max_pixels: int) -> GrayImage:
    """Downscale (never upscale) so that the pixel count is about ``max_pixels``."""
    if max_pixels < 1:
        raise InvalidParameter(f"max_pixels must be >= 1, got {max_pixels}")
    count = gray.width * gray.height
    if count <= max_pixels:
        return gray
    s = math.sqrt(max_pixels / count)
    return resample_bilinear(gray, _round_dim(s * gray.width), _round_dim(s * gray.height))


def downscale_sqrt2(gray: GrayImage) -> GrayImage:
    return resample_bilinear(gray, _round_dim(gray.width / SQRT2), _round_dim(gray.height / SQRT2))
