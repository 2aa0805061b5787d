import numpy as np
import pytest

from oracles import gmm_avg_loglik

from docsig.densefeat import PatchGridSpec, multi_scale_descriptors
from docsig.errors import InvalidParameter
from docsig.features import PyramidSpec
from docsig.fisher import (
    FvConfig,
    extract_fv,
    fisher_vector,
    fv_dimension,
    n_gaussians,
    normalize_fv,
    pyramid_fisher,
    train_vocabulary,
)
from docsig.imgproc import GrayImage
from docsig.models import GmmModel, fit_gmm

# (g, max layers, regions, signature size) per vocabulary size, with 48-d descriptors
FEATURE_SIZES = [
    (1, 5, 121, 185856),
    (2, 5, 121, 371712),
    (3, 4, 57, 350208),
    (4, 3, 21, 258048),
    (5, 3, 21, 516096),
    (6, 2, 5, 245760),
    (7, 2, 5, 491520),
]


def random_model(rng, n, d):
    w = rng.uniform(0.5, 1.5, size=n)
    return GmmModel(w / w.sum(), rng.normal(size=(n, d)), rng.uniform(0.5, 2.0, size=(n, d)))


def test_at_mean_closed_form():
    m = GmmModel(np.array([1.0]), np.array([[1.0, -2.0, 0.5]]), np.array([[1.0, 4.0, 0.25]]))
    fv = fisher_vector(m, np.tile(m.means, (7, 1)))
    np.testing.assert_allclose(fv[:3], 0.0, atol=1e-15)
    np.testing.assert_allclose(fv[3:], -1 / np.sqrt(2), atol=1e-15)


def test_empty_descriptor_set(rng):
    m = random_model(rng, 4, 3)
    assert np.array_equal(fisher_vector(m, np.zeros((0, 3))), np.zeros(24))


def test_dimension_and_mismatch(rng):
    m = random_model(rng, 16, 48)
    assert fisher_vector(m, rng.normal(size=(10, 48))).shape == (1536,)
    with pytest.raises(InvalidParameter):
        fisher_vector(m, rng.normal(size=(10, 47)))


@pytest.mark.parametrize("g,layers,regions,size", FEATURE_SIZES)
def test_reference_feature_sizes(g, layers, regions, size):
    assert PyramidSpec(layers).region_count == regions
    assert fv_dimension(g, 48, layers) == size


def test_gaussian_counts():
    assert [n_gaussians(g) for g in range(1, 8)] == [16, 32, 64, 128, 256, 512, 1024]


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    n, d, t = 3, 2, 50
    m = random_model(rng, n, d)
    x = rng.normal(size=(t, d)) * 1.5
    fv = fisher_vector(m, x)
    g_mu = fv[: n * d].reshape(n, d)
    g_sigma = fv[n * d :].reshape(n, d)
    sd = np.sqrt(m.variances)
    # undo the closed-form Fisher scaling to recover plain gradients
    dmu = g_mu * np.sqrt(m.weights)[:, None] / sd
    dsigma = g_sigma * np.sqrt(2 * m.weights)[:, None] / sd

    h = 1e-6
    for k in range(n):
        for j in range(d):
            mu_p, mu_m = m.means.copy(), m.means.copy()
            mu_p[k, j] += h
            mu_m[k, j] -= h
            fd = (gmm_avg_loglik(x, m.weights, mu_p, sd) - gmm_avg_loglik(x, m.weights, mu_m, sd)) / (2 * h)
            assert abs(fd - dmu[k, j]) <= 1e-4 * abs(fd)
            sd_p, sd_m = sd.copy(), sd.copy()
            sd_p[k, j] += h
            sd_m[k, j] -= h
            fd = (gmm_avg_loglik(x, m.weights, m.means, sd_p) - gmm_avg_loglik(x, m.weights, m.means, sd_m)) / (2 * h)
            assert abs(fd - dsigma[k, j]) <= 1e-4 * abs(fd)


def test_order_and_duplication_invariance(rng):
    m = random_model(rng, 5, 4)
    x = rng.normal(size=(60, 4))
    base = fisher_vector(m, x)
    np.testing.assert_allclose(fisher_vector(m, x[rng.permutation(60)]), base, atol=1e-12)
    np.testing.assert_allclose(fisher_vector(m, np.r_[x, x]), base, atol=1e-12)


def test_normalize_examples(rng):
    v = normalize_fv(rng.normal(size=50))
    assert np.linalg.norm(v.values) == pytest.approx(1.0, abs=1e-9)
    raw = rng.normal(size=20)
    np.testing.assert_allclose(normalize_fv(raw, 1.0).values, raw / np.linalg.norm(raw), atol=1e-15)
    np.testing.assert_allclose(normalize_fv(np.array([-4.0, 0.0, 4.0])).values,
                               np.array([-2.0, 0.0, 2.0]) / np.sqrt(8), atol=1e-15)
    assert np.array_equal(normalize_fv(np.zeros(6)).values, np.zeros(6))


def make_page(seed=0, h=200, w=160):
    rng = np.random.default_rng(seed)
    px = np.ones((h, w))
    for r in range(10, h - 10, 12):
        x0 = rng.integers(5, 20)
        px[r : r + 5, x0 : w - rng.integers(5, 40)] = 0.0
    return GrayImage(px)


@pytest.fixture(scope="module")
def small_vocab():
    descs = np.concatenate([multi_scale_descriptors(make_page(s), PatchGridSpec(32, 16, 2)).descriptors
                            for s in range(6)])
    return train_vocabulary(descs, F=8, g=1, seed=0, max_iters=20)


def test_pyramid_single_layer_equals_plain(small_vocab):
    page = make_page(42)
    grid = PatchGridSpec(32, 16, 2)
    sig = pyramid_fisher(page, small_vocab.gmm, grid, FvConfig(), pca=small_vocab.pca)
    ds = multi_scale_descriptors(page, grid)
    from docsig.models import pca_project

    plain = normalize_fv(fisher_vector(small_vocab.gmm, pca_project(small_vocab.pca, ds.descriptors)))
    np.testing.assert_allclose(sig.values, plain.values, atol=1e-15)


def test_pyramid_dimension_and_norm(small_vocab):
    page = make_page(7)
    sig = pyramid_fisher(page, small_vocab.gmm, PatchGridSpec(32, 16, 2), FvConfig(pyramid=PyramidSpec(3)),
                         pca=small_vocab.pca)
    assert sig.dim == 21 * 2 * 16 * 8
    assert np.linalg.norm(sig.values) == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(sig.values).all()


def test_blank_page_gives_zero_signature(small_vocab):
    sig = extract_fv(GrayImage(np.ones((100, 100))), small_vocab, S=3, W=32, M=1, L=2)
    assert sig.dim == 5 * 256
    assert not sig.values.any()


def test_fv_config_validation():
    with pytest.raises(InvalidParameter):
        FvConfig(alpha=0.0)
    with pytest.raises(InvalidParameter):
        FvConfig(include_weights=True)
