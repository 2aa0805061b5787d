"""PCA and diagonal-covariance Gaussian mixtures (the visual vocabulary)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, InvalidParameter

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
VARIANCE_FLOOR = 1e-4
WEIGHT_FLOOR = 1e-6


@dataclass(eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (K, D), rows are principal directions
    eigenvalues: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.basis.shape[1]

    @property
    def output_dim(self) -> int:
        return self.basis.shape[0]


@dataclass(eq=False)
class GmmModel:
    weights: np.ndarray  # (N,)
    means: np.ndarray  # (N, D)
    variances: np.ndarray  # (N, D), diagonal covariances
    # average log-likelihood after initialisation and after every EM step
    trace: tuple = field(default=(), repr=False)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidParameter(f"samples must be a 2-D array, got shape {x.shape}")
    return x


def fit_pca(samples, target_dim: int) -> PcaModel:
    x = _as_samples(samples)
    n, d = x.shape
    if target_dim < 1 or target_dim > d:
        raise InvalidParameter(f"target_dim must be in 1..{d}, got {target_dim}")
    if n <= target_dim:
        raise InvalidParameter(f"need more than {target_dim} samples, got {n}")
    mean = x.mean(axis=0)
    # thin SVD avoids forming a D x D covariance when D is large
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    basis = vt[:target_dim].copy()
    eig = s[:target_dim] ** 2 / (n - 1)
    idx = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(target_dim), idx])
    basis *= signs[:, None]
    return PcaModel(mean=mean, basis=basis, eigenvalues=eig)


def pca_project(model: PcaModel, x) -> np.ndarray:
    """``basis @ (x - mean)`` for a vector, or row-wise for a matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise InvalidParameter(f"expected dimension {model.input_dim}, got {x.shape[-1]}")
    return (x - model.mean) @ model.basis.T


def log_weighted_densities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """(T, N) matrix of ``log w_n + log N(x_t | mu_n, diag(var_n))``."""
    prec = 1.0 / model.variances
    quad = (x * x) @ prec.T - 2.0 * x @ (model.means * prec).T + np.sum(model.means**2 * prec, axis=1)
    log_det = np.sum(np.log(model.variances), axis=1)
    return np.log(model.weights) - 0.5 * (model.dim * LOG_2PI + log_det + quad)


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _responsibilities(model: GmmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lp = log_weighted_densities(model, x)
    lse = _logsumexp_rows(lp)
    gamma = np.exp(lp - lse[:, None])
    gamma /= gamma.sum(axis=1, keepdims=True)
    return gamma, lse


def gmm_posterior(model: GmmModel, x) -> np.ndarray:
    """Component responsibilities for one vector (N,) or a batch (T, N)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise InvalidParameter(f"expected dimension {model.dim}, got {x.shape[1]}")
    gamma, _ = _responsibilities(model, x)
    return gamma[0] if single else gamma


def gmm_log_likelihood(model: GmmModel, x) -> float:
    """Average log-likelihood of the samples."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return float(np.mean(_logsumexp_rows(log_weighted_densities(model, x))))


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            j = rng.choice(n, p=d2 / total)
        else:
            j = rng.integers(n)
        centers[i] = x[j]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _normalize_weights(w: np.ndarray) -> np.ndarray:
    w = np.maximum(w / w.sum(), WEIGHT_FLOOR)
    return w / w.sum()


def _initial_model(x: np.ndarray, n_components: int, floor: np.ndarray, rng) -> GmmModel:
    centers = kmeans_plus_plus(x, n_components, rng)
    d2 = (x * x).sum(axis=1)[:, None] - 2 * x @ centers.T + (centers * centers).sum(axis=1)
    assign = np.argmin(d2, axis=1)
    counts = np.bincount(assign, minlength=n_components).astype(np.float64)
    global_var = x.var(axis=0)
    means = centers.copy()
    variances = np.tile(global_var, (n_components, 1))
    for n in range(n_components):
        members = x[assign == n]
        if len(members) >= 2:
            means[n] = members.mean(axis=0)
            variances[n] = members.var(axis=0)
    return GmmModel(_normalize_weights(np.maximum(counts, 1.0)), means, np.maximum(variances, floor))


def fit_gmm(samples, n_components: int, seed: int = 0, max_iters: int = 100,
            tol: float = 1e-5) -> GmmModel:
    """Diagonal-covariance EM initialised by k-means++ and one hard-assignment pass.

    Stops when the relative improvement of the average log-likelihood drops
    below ``tol`` or after ``max_iters`` EM steps.  Variances are floored at
    1e-4 times the global per-dimension variance.
    """
    x = _as_samples(samples)
    t, d = x.shape
    if n_components < 1:
        raise InvalidParameter(f"n_components must be >= 1, got {n_components}")
    if t < 10 * n_components:
        raise InvalidParameter(f"need at least {10 * n_components} samples for {n_components} components, got {t}")
    global_var = x.var(axis=0)
    if not np.any(global_var > 0):
        raise DegenerateData("all samples are identical")

    # centring reduces cancellation in the E[x^2] - mu^2 variance update
    shift = x.mean(axis=0)
    xc = x - shift
    floor = np.maximum(VARIANCE_FLOOR * global_var, 1e-12)
    rng = np.random.default_rng(seed)
    model = _initial_model(xc, n_components, floor, rng)

    gamma, lse = _responsibilities(model, xc)
    trace = [float(lse.mean())]
    x2 = xc * xc
    for it in range(max_iters):
        nk = gamma.sum(axis=0)
        safe = np.maximum(nk, 1e-300)[:, None]
        means = gamma.T @ xc / safe
        variances = gamma.T @ x2 / safe - means**2
        dead = nk < 1e-10
        means[dead] = model.means[dead]
        variances[dead] = model.variances[dead]
        model = GmmModel(_normalize_weights(nk / t), means, np.maximum(variances, floor))

        gamma, lse = _responsibilities(model, xc)
        ll = float(lse.mean())
        prev = trace[-1]
        trace.append(ll)
        if abs(ll - prev) < tol * max(abs(prev), 1e-12):
            break
    logger.debug("EM stopped after %d iterations, avg log-likelihood %.6f", len(trace) - 1, trace[-1])
    return GmmModel(model.weights, model.means + shift, model.variances, trace=tuple(trace))
