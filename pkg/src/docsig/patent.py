"""Patent-level ranking from image-set similarities (MEAN/MAX, class means, single type)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .classifiers import LinearModel, svm_scores
from .errors import InvalidParameter

# score given to patents left without images after filtering; ranked last
SENTINEL = float("-inf")


class Mode(str, Enum):
    MEAN = "MEAN"
    MAX = "MAX"


class Grouping(str, Enum):
    NONE = "NONE"
    CLASS_MEANS = "CLASS_MEANS"
    SINGLE_TYPE = "SINGLE_TYPE"


@dataclass(frozen=True)
class AggregationStrategy:
    mode: Mode = Mode.MAX
    grouping: Grouping = Grouping.NONE
    type_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "grouping", Grouping(self.grouping))
        if self.grouping is Grouping.SINGLE_TYPE and (self.type_index is None or self.type_index < 0):
            raise InvalidParameter("SINGLE_TYPE grouping needs a valid type index")

    @property
    def needs_types(self) -> bool:
        return self.grouping is not Grouping.NONE


def table_strategies(drawing_type: int) -> dict[str, AggregationStrategy]:
    """The I1..I6 grid: rows none / class means / drawings only, columns MEAN / MAX."""
    return {
        "I1": AggregationStrategy(Mode.MEAN, Grouping.NONE),
        "I2": AggregationStrategy(Mode.MAX, Grouping.NONE),
        "I3": AggregationStrategy(Mode.MEAN, Grouping.CLASS_MEANS),
        "I4": AggregationStrategy(Mode.MAX, Grouping.CLASS_MEANS),
        "I5": AggregationStrategy(Mode.MEAN, Grouping.SINGLE_TYPE, drawing_type),
        "I6": AggregationStrategy(Mode.MAX, Grouping.SINGLE_TYPE, drawing_type),
    }


@dataclass(eq=False)
class PatentDoc:
    id: str
    features: np.ndarray  # (n_images, dim)
    predicted_types: np.ndarray | None = None
    true_types: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim == 1:
            f = f.reshape(0, 0) if f.size == 0 else f[None, :]
        self.features = f
        if self.predicted_types is not None:
            self.predicted_types = np.asarray(self.predicted_types, dtype=np.int64)
            if self.predicted_types.shape != (len(f),):
                raise InvalidParameter(f"patent {self.id}: one predicted type per image required")

    @property
    def n_images(self) -> int:
        return self.features.shape[0]


def classify_image_types(model: LinearModel, patent: PatentDoc) -> PatentDoc:
    if patent.n_images == 0:
        return replace(patent, predicted_types=np.zeros(0, dtype=np.int64))
    types = np.argmax(svm_scores(model, patent.features), axis=1)
    return replace(patent, predicted_types=types)


def _types(p: PatentDoc) -> np.ndarray:
    if p.predicted_types is None:
        raise InvalidParameter(f"patent {p.id} has no predicted image types")
    return p.predicted_types


def _aggregate(values: np.ndarray, mode: Mode) -> float:
    if values.size == 0:
        return SENTINEL
    return float(values.mean() if mode is Mode.MEAN else values.max())


def patent_similarity(a: PatentDoc, b: PatentDoc, strategy: AggregationStrategy) -> float:
    fa, fb = a.features, b.features
    if strategy.grouping is Grouping.SINGLE_TYPE:
        fa = fa[_types(a) == strategy.type_index]
        fb = fb[_types(b) == strategy.type_index]
    if strategy.grouping is Grouping.CLASS_MEANS:
        ta, tb = _types(a), _types(b)
        shared = sorted(set(ta.tolist()) & set(tb.tolist()))
        sims = np.array([fa[ta == c].mean(axis=0) @ fb[tb == c].mean(axis=0) for c in shared])
        return _aggregate(sims, strategy.mode)
    if len(fa) == 0 or len(fb) == 0:
        return SENTINEL
    return _aggregate(fa @ fb.T, strategy.mode)


def rank_patents(query: PatentDoc, collection: list[PatentDoc],
                 strategy: AggregationStrategy) -> list[tuple[str, float]]:
    """Descending similarity; sentinel scores last; ties by patent id."""
    if not collection:
        raise InvalidParameter("empty patent collection")
    scored = [(p.id, patent_similarity(query, p, strategy)) for p in collection]
    return sorted(scored, key=lambda item: (item[1] == SENTINEL, -item[1] if item[1] != SENTINEL else 0.0, item[0]))
