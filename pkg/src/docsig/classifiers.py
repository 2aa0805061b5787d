"""KNN, nearest class mean (plain and metric-learned) and one-vs-rest linear SVM."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter, TrainingDiverged
from .features import FeatureVector
from .models import fit_pca

logger = logging.getLogger(__name__)

# default SGD learning rates per signature kind
SVM_LEARNING_RATES = {"RL": 1e-5, "FV": 1e-4}


@dataclass(eq=False)
class LabeledFeatureSet:
    X: np.ndarray
    y: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] == 0:
            raise InvalidParameter("empty training set")
        if self.y.shape != (self.X.shape[0],):
            raise InvalidParameter("one label per feature vector required")
        if self.y.min() < 0 or self.y.max() >= self.n_classes:
            raise InvalidParameter(f"labels must lie in [0, {self.n_classes})")

    @classmethod
    def from_vectors(cls, vectors: list[FeatureVector], labels, n_classes: int | None = None):
        dims = {v.dim for v in vectors}
        if len(dims) > 1:
            raise InvalidParameter(f"mixed feature dimensions {sorted(dims)}")
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1
        return cls(np.stack([v.values for v in vectors]), labels, n_classes)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray  # (C, dim + 1); last column is the bias
    n_classes: int
    hyperparams: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.weights.shape[1] - 1


@dataclass(eq=False)
class ProjectionMatrix:
    matrix: np.ndarray  # (K, dim)
    # mean training log-likelihood at initialisation and after every batch
    trace: tuple = field(default=(), repr=False)

    @property
    def target_dim(self) -> int:
        return self.matrix.shape[0]


def _vec(query) -> np.ndarray:
    if isinstance(query, FeatureVector):
        return query.values
    return np.asarray(query, dtype=np.float64)


def _check_dim(expected: int, got: int):
    if expected != got:
        raise InvalidParameter(f"dimension mismatch: expected {expected}, got {got}")


# -- KNN -------------------------------------------------------------------------------------

def knn_from_scores(scores: np.ndarray, labels: np.ndarray, k: int, n_classes: int) -> int:
    """Majority vote among the k highest-scoring items.

    Ties go to the class with the larger summed similarity, then the smaller index.
    """
    if not 1 <= k <= len(labels):
        raise InvalidParameter(f"k must be in 1..{len(labels)}, got {k}")
    order = np.argsort(-scores, kind="stable")[:k]
    votes = np.bincount(labels[order], minlength=n_classes)
    sims = np.bincount(labels[order], weights=scores[order], minlength=n_classes)
    best = max(range(n_classes), key=lambda c: (votes[c], sims[c], -c))
    return int(best)


def knn_predict(train: LabeledFeatureSet, query, k: int = 4) -> int:
    q = _vec(query)
    _check_dim(train.dim, q.shape[0])
    return knn_from_scores(train.X @ q, train.y, k, train.n_classes)


def knn_predict_scores(sim: np.ndarray, train_labels, k: int, n_classes: int) -> np.ndarray:
    """Row-wise KNN over a precomputed (queries x train) similarity matrix."""
    train_labels = np.asarray(train_labels, dtype=np.int64)
    return np.array([knn_from_scores(row, train_labels, k, n_classes) for row in sim], dtype=np.int64)


# -- nearest class mean ----------------------------------------------------------------------

def ncm_fit(train: LabeledFeatureSet) -> np.ndarray:
    counts = np.bincount(train.y, minlength=train.n_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise InvalidParameter(f"classes without training examples: {missing}")
    sums = np.zeros((train.n_classes, train.dim))
    np.add.at(sums, train.y, train.X)
    return sums / counts[:, None]


def _projected_sq_distances(means: np.ndarray, queries: np.ndarray, metric) -> np.ndarray:
    if metric is not None:
        p = metric.matrix if isinstance(metric, ProjectionMatrix) else np.asarray(metric)
        _check_dim(p.shape[1], queries.shape[1])
        queries = queries @ p.T
        means = means @ p.T
    diff = queries[:, None, :] - means[None, :, :]
    return np.einsum("qck,qck->qc", diff, diff)


def ncm_predict_batch(means: np.ndarray, queries, metric=None) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    _check_dim(means.shape[1], queries.shape[1])
    # argmin returns the first (smallest) class index on ties
    return np.argmin(_projected_sq_distances(means, queries, metric), axis=1)


def ncm_predict(means: np.ndarray, query, metric=None) -> int:
    return int(ncm_predict_batch(means, _vec(query)[None, :], metric)[0])


def ncm_log_likelihood(P: np.ndarray, X: np.ndarray, y: np.ndarray, means: np.ndarray) -> float:
    """Mean log p(y | x) under the softmax over -1/2 squared projected distances."""
    logits = -0.5 * _projected_sq_distances(means, X, P)
    logits -= logits.max(axis=1, keepdims=True)
    log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return float(np.mean(log_p[np.arange(len(y)), y]))


def ncm_ml_gradient(P: np.ndarray, X: np.ndarray, y: np.ndarray, means: np.ndarray) -> np.ndarray:
    """Gradient of :func:`ncm_log_likelihood` with respect to P."""
    z = X @ P.T
    zm = means @ P.T
    zdiff = z[:, None, :] - zm[None, :, :]  # (B, C, K)
    logits = -0.5 * np.einsum("bck,bck->bc", zdiff, zdiff)
    logits -= logits.max(axis=1, keepdims=True)
    prob = np.exp(logits)
    prob /= prob.sum(axis=1, keepdims=True)
    alpha = prob
    alpha[np.arange(len(y)), y] -= 1.0
    weighted = alpha[:, :, None] * zdiff
    per_item = weighted.sum(axis=1)  # (B, K)
    per_class = weighted.sum(axis=0)  # (C, K)
    return (per_item.T @ X - per_class.T @ means) / len(y)


def ncm_ml_fit(train: LabeledFeatureSet, target_dim: int, learning_rate: float = 1.0,
               batches: int = 200, seed: int = 0, means: np.ndarray | None = None) -> ProjectionMatrix:
    """Learn a K x dim projection for NCM by mini-batch gradient ascent.

    P starts from the top-K PCA basis of the training features; each batch
    holds as many items as there are classes; class means stay fixed.
    """
    if not 1 <= target_dim <= train.dim:
        raise InvalidParameter(f"target_dim must be in 1..{train.dim}, got {target_dim}")
    if means is None:
        means = ncm_fit(train)
    P = fit_pca(train.X, target_dim).basis.copy()
    rng = np.random.default_rng(seed)
    batch_size = min(train.n_classes, len(train))
    trace = [ncm_log_likelihood(P, train.X, train.y, means)]
    for b in range(batches):
        idx = rng.choice(len(train), size=batch_size, replace=False)
        P = P + learning_rate * ncm_ml_gradient(P, train.X[idx], train.y[idx], means)
        if not np.all(np.isfinite(P)):
            raise TrainingDiverged(f"non-finite projection after batch {b}; try a smaller learning rate")
        if (b + 1) % 20 == 0 or b + 1 == batches:
            obj = ncm_log_likelihood(P, train.X, train.y, means)
            if not np.isfinite(obj):
                raise TrainingDiverged(f"non-finite objective after batch {b}")
            trace.append(obj)
    logger.debug("NCM metric learning objective %.4f -> %.4f", trace[0], trace[-1])
    return ProjectionMatrix(P, trace=tuple(trace))


# -- linear SVM ------------------------------------------------------------------------------

def svm_fit_ovr(train: LabeledFeatureSet, learning_rate: float = 1e-4, positive_weight: float = 5.0,
                passes: int = 100, seed: int = 0) -> LinearModel:
    """One-vs-rest hinge-loss SGD with a fixed step and no regulariser.

    All C binary problems see the same seeded visiting order, so they are
    updated together: on item x with label +-1, any class with margin below 1
    moves by ``learning_rate * m * y * [x, 1]`` (m = positive_weight for positives).
    """
    if train.n_classes < 2:
        raise InvalidParameter("at least two classes required")
    n, c = len(train), train.n_classes
    xa = np.hstack([train.X, np.ones((n, 1))])
    signs = np.where(train.y[:, None] == np.arange(c)[None, :], 1.0, -1.0)
    steps = learning_rate * np.where(signs > 0, positive_weight * signs, signs)
    w = np.zeros((c, xa.shape[1]))
    rng = np.random.default_rng(seed)
    for _ in range(passes):
        for i in rng.permutation(n):
            x = xa[i]
            active = signs[i] * (w @ x) < 1.0
            if active.any():
                w[active] += steps[i, active, None] * x
    hyper = {"learning_rate": learning_rate, "positive_weight": positive_weight, "passes": passes, "seed": seed}
    return LinearModel(w, c, hyper)


def svm_scores(model: LinearModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim(model.dim, X.shape[1])
    return X @ model.weights[:, :-1].T + model.weights[:, -1]


def svm_predict(model: LinearModel, query) -> tuple[np.ndarray, int]:
    scores = svm_scores(model, _vec(query)[None, :])[0]
    return scores, int(np.argmax(scores))
