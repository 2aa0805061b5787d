"""Dot-product similarity, ranking metrics (MAP, P@k) and late fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter
from .features import FeatureVector


@dataclass
class EvalReport:
    map: float
    p_at: dict
    ap: np.ndarray = field(repr=False)  # per-query AP, NaN for queries without relevant items
    n_excluded: int = 0
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {"MAP": self.map, "excluded_queries": self.n_excluded}
        out.update({f"P@{k}": v for k, v in self.p_at.items()})
        return out


def _matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        return np.atleast_2d(features.astype(np.float64, copy=False))
    rows = [f.values if isinstance(f, FeatureVector) else np.asarray(f, dtype=np.float64) for f in features]
    dims = {r.shape[0] for r in rows}
    if len(dims) > 1:
        raise InvalidParameter(f"mixed feature dimensions {sorted(dims)}")
    return np.stack(rows)


def similarity_matrix(queries, corpus) -> np.ndarray:
    """Entry (i, j) is the dot product of query i and corpus item j."""
    q, c = _matrix(queries), _matrix(corpus)
    if q.shape[1] != c.shape[1]:
        raise InvalidParameter(f"dimension mismatch: {q.shape[1]} vs {c.shape[1]}")
    return q @ c.T


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Descending score per row, ties broken by the smaller corpus index."""
    return np.argsort(-np.atleast_2d(scores), axis=1, kind="stable")


def evaluate_ranking(sim: np.ndarray, query_labels, corpus_labels, ks=(1, 5), config=None) -> EvalReport:
    sim = np.atleast_2d(np.asarray(sim, dtype=np.float64))
    query_labels = np.asarray(query_labels)
    corpus_labels = np.asarray(corpus_labels)
    if sim.shape != (len(query_labels), len(corpus_labels)):
        raise InvalidParameter(f"similarity shape {sim.shape} does not match label counts "
                               f"({len(query_labels)}, {len(corpus_labels)})")
    rel = corpus_labels[rank_order(sim)] == query_labels[:, None]
    hits = np.cumsum(rel, axis=1)
    ranks = np.arange(1, sim.shape[1] + 1)
    aps = np.full(sim.shape[0], np.nan)
    for i in range(sim.shape[0]):
        n_rel = int(hits[i, -1])
        if n_rel:
            pos = np.flatnonzero(rel[i])
            aps[i] = math.fsum((hits[i, pos] / ranks[pos]).tolist()) / n_rel
    valid = aps[~np.isnan(aps)]
    mean_ap = math.fsum(valid.tolist()) / len(valid) if len(valid) else 0.0
    p_at = {}
    for k in ks:
        if k < 1:
            raise InvalidParameter(f"k must be >= 1, got {k}")
        kk = min(k, sim.shape[1])
        p_at[k] = math.fsum((hits[:, kk - 1] / k).tolist()) / sim.shape[0]
    return EvalReport(mean_ap, p_at, aps, int(np.isnan(aps).sum()), dict(config or {}))


def fuse_scores(sims, weights=None) -> np.ndarray:
    """Weighted sum of equally shaped score matrices (default: unit weights)."""
    sims = [np.asarray(s, dtype=np.float64) for s in sims]
    if not sims:
        raise InvalidParameter("nothing to fuse")
    if weights is None:
        weights = [1.0] * len(sims)
    if len(weights) != len(sims):
        raise InvalidParameter(f"{len(weights)} weights for {len(sims)} matrices")
    shape = sims[0].shape
    if any(s.shape != shape for s in sims):
        raise InvalidParameter(f"shape mismatch: {[s.shape for s in sims]}")
    out = np.zeros(shape)
    for w, s in zip(weights, sims):
        out += w * s
    return out


def fuse_class_scores(score_sets) -> np.ndarray:
    """Late fusion of per-class classifier scores: unweighted mean over signature kinds."""
    return fuse_scores(score_sets) / len(score_sets)


def average_precision(relevant) -> float:
    """AP of one ranked list given its relevance flags in rank order; NaN if nothing is relevant."""
    rel = np.asarray(relevant, dtype=bool)
    if not rel.any():
        return float("nan")
    pos = np.flatnonzero(rel)
    hits = np.arange(1, len(pos) + 1)
    return math.fsum((hits / (pos + 1)).tolist()) / len(pos)


def precision_at(relevant, k: int) -> float:
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    return float(np.count_nonzero(np.asarray(relevant, dtype=bool)[:k])) / k
