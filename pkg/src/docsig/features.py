"""Signature containers, spatial pyramid geometry and vector normalizations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import InvalidParameter

# grid side per pyramid layer; Ln uses the first n entries
PYRAMID_GRIDS = (1, 2, 4, 6, 8)

KINDS = ("RL", "FV", "fused")


@dataclass(frozen=True)
class Region:
    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def empty(self) -> bool:
        return self.width <= 0 or self.height <= 0

    def contains(self, x, y):
        """Half-open membership test; works elementwise on arrays."""
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)


@dataclass(frozen=True)
class PyramidSpec:
    levels: int = 1

    def __post_init__(self):
        if not 1 <= self.levels <= len(PYRAMID_GRIDS):
            raise InvalidParameter(f"pyramid levels must be in 1..{len(PYRAMID_GRIDS)}, got {self.levels}")

    @property
    def grids(self) -> tuple[int, ...]:
        return PYRAMID_GRIDS[: self.levels]

    @property
    def region_count(self) -> int:
        return sum(g * g for g in self.grids)

    def regions(self, width: int, height: int) -> Iterator[Region]:
        """Layer-major, then row-major regions covering the image once per layer."""
        for g in self.grids:
            for i in range(g):
                y0, y1 = (i * height) // g, ((i + 1) * height) // g
                for j in range(g):
                    x0, x1 = (j * width) // g, ((j + 1) * width) // g
                    yield Region(x0, y0, x1, y1)


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    kind: str = "RL"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.kind not in KINDS:
            raise InvalidParameter(f"unknown signature kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def power_normalize(x: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Componentwise ``sign(z) * |z| ** alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise InvalidParameter(f"alpha must lie in (0, 1], got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    if alpha == 1.0:
        return x.copy()
    if alpha == 0.5:
        return np.sign(x) * np.sqrt(np.abs(x))
    return np.sign(x) * np.abs(x) ** alpha


def l1_normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    s = np.abs(x).sum()
    return x / s if s > 0 else x.copy()


def l2_normalize(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = np.sqrt(np.dot(x, x))
    return x / n if n > 0 else x.copy()


def concat(vectors: list[FeatureVector], kind: str = "fused") -> FeatureVector:
    """Early fusion: plain concatenation of the blocks, no renormalization."""
    values = np.concatenate([v.values for v in vectors])
    config = {"parts": [{"kind": v.kind, **v.config} for v in vectors]}
    return FeatureVector(values, kind=kind, config=config)
