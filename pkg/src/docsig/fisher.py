"""Fisher Vector signatures over a diagonal GMM vocabulary, with spatial pyramids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densefeat import DescriptorSet, PatchGridSpec, multi_scale_descriptors
from .errors import InvalidParameter
from .features import FeatureVector, PyramidSpec, l2_normalize, power_normalize
from .imgproc import GrayImage, resize_max_pixels
from .models import GmmModel, PcaModel, fit_gmm, fit_pca, gmm_posterior, pca_project
from .runlength import SIZE_TARGETS


@dataclass(frozen=True)
class FvConfig:
    alpha: float = 0.5
    pyramid: PyramidSpec = field(default_factory=PyramidSpec)
    # gradients w.r.t. the mixture weights are never part of the signature
    include_weights: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidParameter(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.include_weights:
            raise InvalidParameter("weight gradients are not supported")


@dataclass(eq=False)
class Vocabulary:
    """PCA projection of raw SIFT plus the GMM fitted in the projected space."""

    pca: PcaModel
    gmm: GmmModel


def n_gaussians(g: int) -> int:
    """Vocabulary size for the G parameter: 2 ** (g + 3)."""
    if not 1 <= g <= 7:
        raise InvalidParameter(f"G must be in 1..7, got {g}")
    return 2 ** (g + 3)


def fv_dimension(g: int, F: int, L: int) -> int:
    return PyramidSpec(L).region_count * 2 * n_gaussians(g) * F


def _as_matrix(descriptors) -> np.ndarray:
    if isinstance(descriptors, DescriptorSet):
        descriptors = descriptors.descriptors
    return np.atleast_2d(np.asarray(descriptors, dtype=np.float64))


def _fv_from_posteriors(model: GmmModel, x: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    n, d = model.n_components, model.dim
    t = x.shape[0]
    if t == 0:
        return np.zeros(2 * n * d)
    s0 = gamma.sum(axis=0)[:, None]
    s1 = gamma.T @ x
    s2 = gamma.T @ (x * x)
    mu, var = model.means, model.variances
    sigma = np.sqrt(var)
    w = model.weights[:, None]
    # sum_t gamma (x - mu) and sum_t gamma (x - mu)^2 expanded into moments
    first = s1 - mu * s0
    second = s2 - 2 * mu * s1 + mu * mu * s0
    g_mu = first / (sigma * t * np.sqrt(w))
    g_sigma = (second / var - s0) / (t * np.sqrt(2 * w))
    return np.concatenate([g_mu.ravel(), g_sigma.ravel()])


def fisher_vector(model: GmmModel, descriptors) -> np.ndarray:
    """Raw 2ND gradient vector: mean block (N x D) followed by std-dev block (N x D)."""
    x = _as_matrix(descriptors)
    if x.shape[0] == 0:
        return np.zeros(2 * model.n_components * model.dim)
    if x.shape[1] != model.dim:
        raise InvalidParameter(f"descriptor dimension {x.shape[1]} != model dimension {model.dim}")
    return _fv_from_posteriors(model, x, gmm_posterior(model, x))


def normalize_fv(raw, alpha: float = 0.5, config: dict | None = None) -> FeatureVector:
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise InvalidParameter("Fisher vector contains non-finite entries")
    return FeatureVector(l2_normalize(power_normalize(raw, alpha)), kind="FV", config=config or {})


def pyramid_fisher(gray: GrayImage, model: GmmModel, grid: PatchGridSpec,
                   config: FvConfig = FvConfig(), pca: PcaModel | None = None,
                   meta: dict | None = None) -> FeatureVector:
    """Per-region normalized FVs pooled by patch centre, concatenated and L2-normalized.

    Descriptors are extracted once on the whole image; ``pca`` (when given)
    projects raw SIFT into the vocabulary space.
    """
    ds = multi_scale_descriptors(gray, grid)
    x = ds.descriptors
    if pca is not None and ds.count:
        x = pca_project(pca, x)
    if ds.count and x.shape[1] != model.dim:
        raise InvalidParameter(f"descriptor dimension {x.shape[1]} != model dimension {model.dim}")
    gamma = gmm_posterior(model, x) if ds.count else np.zeros((0, model.n_components))

    blocks = []
    cx, cy = ds.centers[:, 0], ds.centers[:, 1]
    for region in config.pyramid.regions(gray.width, gray.height):
        inside = region.contains(cx, cy)
        raw = _fv_from_posteriors(model, x[inside], gamma[inside])
        blocks.append(normalize_fv(raw, config.alpha).values)
    values = l2_normalize(np.concatenate(blocks))
    return FeatureVector(values, kind="FV", config=meta or {})


def extract_fv(gray: GrayImage, vocab: Vocabulary, S: int = 3, W: int = 48, M: int = 1, L: int = 1,
               stride: int | None = None, alpha: float = 0.5, meta: dict | None = None) -> FeatureVector:
    """Full FV pipeline: resize to the S target, dense multi-scale SIFT, PCA, pyramid FV."""
    target = SIZE_TARGETS[S]
    if target is not None:
        gray = resize_max_pixels(gray, target)
    grid = PatchGridSpec(W, stride, M)
    return pyramid_fisher(gray, vocab.gmm, grid, FvConfig(alpha, PyramidSpec(L)), pca=vocab.pca, meta=meta)


def train_vocabulary(descriptors: np.ndarray, F: int, g: int, seed: int = 0,
                     max_samples: int = 1_000_000, max_iters: int = 100, tol: float = 1e-5) -> Vocabulary:
    """Fit PCA to F dimensions and a 2**(g+3)-component GMM on a seeded subsample."""
    x = np.asarray(descriptors, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if x.shape[0] > max_samples:
        x = x[np.sort(rng.choice(x.shape[0], size=max_samples, replace=False))]
    pca = fit_pca(x, F)
    gmm = fit_gmm(pca_project(pca, x), n_gaussians(g), seed=seed, max_iters=max_iters, tol=tol)
    return Vocabulary(pca, gmm)
