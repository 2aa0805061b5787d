"""Dense multi-scale SIFT descriptors on a regular patch grid."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidParameter
from .features import Region
from .imgproc import SQRT2, GrayImage, downscale_sqrt2

SIFT_DIM = 128
N_CELLS = 4
N_ORIENT = 8
CLIP = 0.2
# raw histogram norm below which a patch counts as uniform
MIN_NORM = 1e-10


@dataclass(frozen=True)
class PatchGridSpec:
    window: int = 48
    stride: int | None = None
    scales: int = 1

    def __post_init__(self):
        if self.window < 8:
            raise InvalidParameter(f"window must be >= 8, got {self.window}")
        if self.stride is None:
            object.__setattr__(self, "stride", self.window // 2)
        if not 1 <= self.stride <= self.window:
            raise InvalidParameter(f"stride must be in 1..window, got {self.stride}")
        if self.scales < 1:
            raise InvalidParameter(f"scales must be >= 1, got {self.scales}")


@dataclass
class DescriptorSet:
    """Local descriptors of one image.

    ``centers`` holds each patch centre as (x, y) in the coordinates of the
    input image, ``scales`` the index of the pyramid scale it came from.
    """

    descriptors: np.ndarray
    centers: np.ndarray
    scales: np.ndarray

    @property
    def count(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    @classmethod
    def empty(cls, dim: int = SIFT_DIM) -> "DescriptorSet":
        return cls(np.zeros((0, dim)), np.zeros((0, 2)), np.zeros(0, dtype=np.int64))


def dense_patch_grid(width: int, height: int, window: int, stride: int) -> list[tuple[int, int]]:
    """Top-left corners (x, y) of all windows fitting inside the image, row-major."""
    if stride < 1:
        raise InvalidParameter(f"stride must be >= 1, got {stride}")
    if window > width or window > height:
        return []
    xs = range(0, width - window + 1, stride)
    ys = range(0, height - window + 1, stride)
    return [(x, y) for y in ys for x in xs]


def _gradients(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient magnitude and orientation in [0, 2*pi)."""
    p = np.pad(pixels, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ori = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    return mag, ori


@lru_cache(maxsize=16)
def _spatial_weights(window: int) -> np.ndarray:
    """(window*window, 16) Gaussian-weighted bilinear assignment of pixels to cells."""
    cell = window / N_CELLS
    u = np.arange(window) + 0.5
    sigma = window / 2.0
    g = np.exp(-((u - window / 2.0) ** 2) / (2 * sigma**2))

    b = u / cell - 0.5
    lo = np.floor(b).astype(int)
    frac = b - lo
    axis_w = np.zeros((window, N_CELLS))
    for i in range(window):
        if 0 <= lo[i] < N_CELLS:
            axis_w[i, lo[i]] += 1.0 - frac[i]
        if 0 <= lo[i] + 1 < N_CELLS:
            axis_w[i, lo[i] + 1] += frac[i]
    axis_w *= g[:, None]
    # rows index pixel (y, x) row-major, columns index cell (cy, cx) row-major
    w = np.einsum("ya,xb->yxab", axis_w, axis_w).reshape(window * window, N_CELLS * N_CELLS)
    w.setflags(write=False)
    return w


def normalize_sift(raw: np.ndarray) -> np.ndarray:
    """L2-normalize, clip at 0.2 and re-normalize each row; uniform rows become zero."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    norms = np.sqrt(np.einsum("ij,ij->i", raw, raw))
    out = np.zeros_like(raw)
    ok = norms >= MIN_NORM
    v = np.minimum(raw[ok] / norms[ok, None], CLIP)
    out[ok] = v / np.sqrt(np.einsum("ij,ij->i", v, v))[:, None]
    return out


def _raw_histograms(mag: np.ndarray, ori: np.ndarray, positions, window: int) -> np.ndarray:
    if not positions:
        return np.zeros((0, SIFT_DIM))
    xs = np.array([p[0] for p in positions])
    ys = np.array([p[1] for p in positions])
    m = sliding_window_view(mag, (window, window))[ys, xs].reshape(len(xs), -1)
    o = sliding_window_view(ori, (window, window))[ys, xs].reshape(len(xs), -1)

    ob = o * (N_ORIENT / (2 * np.pi))
    lo = np.floor(ob).astype(np.int64)
    frac = ob - lo
    lo %= N_ORIENT
    hi = (lo + 1) % N_ORIENT
    votes = np.empty((len(xs), N_ORIENT, window * window))
    for k in range(N_ORIENT):
        votes[:, k, :] = m * (np.where(lo == k, 1.0 - frac, 0.0) + np.where(hi == k, frac, 0.0))

    hist = votes @ _spatial_weights(window)  # (P, orient, cell)
    return hist.transpose(0, 2, 1).reshape(len(xs), SIFT_DIM)


def sift_descriptor(gray: GrayImage, patch: Region) -> np.ndarray:
    """128-d descriptor (4x4 cells x 8 orientations, cell-major) of a square patch."""
    if patch.width != patch.height or patch.width < 1:
        raise InvalidParameter(f"patch must be a non-empty square, got {patch}")
    if patch.x0 < 0 or patch.y0 < 0 or patch.x1 > gray.width or patch.y1 > gray.height:
        raise InvalidParameter(f"patch {patch} outside the image")
    mag, ori = _gradients(gray.pixels)
    raw = _raw_histograms(mag, ori, [(patch.x0, patch.y0)], patch.width)
    return normalize_sift(raw)[0]


def grid_descriptors(gray: GrayImage, window: int, stride: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Normalized descriptors for every grid patch of a single scale (zeros kept)."""
    positions = dense_patch_grid(gray.width, gray.height, window, stride)
    mag, ori = _gradients(gray.pixels)
    return normalize_sift(_raw_histograms(mag, ori, positions, window)), positions


def multi_scale_descriptors(gray: GrayImage, spec: PatchGridSpec) -> DescriptorSet:
    """Descriptors pooled over the input and ``scales - 1`` successive sqrt(2) downscalings.

    Uniform patches (all-zero descriptors) are dropped.
    """
    descs, centers, scales = [], [], []
    image = gray
    for s in range(spec.scales):
        if s > 0:
            image = downscale_sqrt2(image)
        if spec.window > image.width or spec.window > image.height:
            break
        d, positions = grid_descriptors(image, spec.window, spec.stride)
        keep = np.any(d != 0, axis=1)
        factor = SQRT2**s
        c = (np.asarray(positions, dtype=np.float64) + spec.window / 2.0) * factor
        descs.append(d[keep])
        centers.append(c[keep])
        scales.append(np.full(int(keep.sum()), s, dtype=np.int64))
    if not descs:
        return DescriptorSet.empty()
    return DescriptorSet(np.concatenate(descs), np.concatenate(centers), np.concatenate(scales))


def grid_count(width: int, height: int, window: int, stride: int) -> int:
    if window > width or window > height:
        return 0
    return ((width - window) // stride + 1) * ((height - window) // stride + 1)


def scaled_dims(width: int, height: int, scales: int) -> list[tuple[int, int]]:
    """Image dimensions at each sqrt(2) scale step, matching :func:`downscale_sqrt2`."""
    dims = [(width, height)]
    for _ in range(scales - 1):
        w, h = dims[-1]
        dims.append((max(1, math.floor(w / SQRT2 + 0.5)), max(1, math.floor(h / SQRT2 + 0.5))))
    return dims
