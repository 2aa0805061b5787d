import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_ranking

from docsig.classifiers import knn_predict_scores
from docsig.errors import InvalidParameter
from docsig.features import l2_normalize
from docsig.retrieval import evaluate_ranking, fuse_class_scores, fuse_scores, similarity_matrix


def test_similarity_examples(rng):
    e = np.eye(3)
    s = similarity_matrix(e, e)
    np.testing.assert_array_equal(s, np.eye(3))
    X = np.stack([l2_normalize(v) for v in rng.normal(size=(20, 7))])
    s = similarity_matrix(X[:5], X)
    assert np.all(np.abs(s) <= 1 + 1e-12)
    with pytest.raises(InvalidParameter):
        similarity_matrix(np.ones((2, 3)), np.ones((2, 4)))


def test_ap_examples():
    # one query, relevant items ranked 1 and 3
    sim = np.array([[0.9, 0.8, 0.7, 0.1, 0.0]])
    r = evaluate_ranking(sim, [1], [1, 0, 1, 0, 0], ks=(1, 5))
    assert r.map == pytest.approx((1 + 2 / 3) / 2)
    assert r.p_at[5] == pytest.approx(0.4)
    assert r.p_at[1] == 1.0
    r = evaluate_ranking(sim, [1], [1, 1, 0, 0, 0])
    assert r.map == 1.0


def test_queries_without_relevant_items_excluded():
    sim = np.array([[0.9, 0.1], [0.2, 0.3]])
    r = evaluate_ranking(sim, [0, 5], [0, 1], ks=(1,))
    assert r.n_excluded == 1
    assert r.map == 1.0
    assert np.isnan(r.ap[1])
    assert r.p_at[1] == 0.5


def test_ties_broken_by_corpus_index():
    sim = np.zeros((1, 4))
    r = evaluate_ranking(sim, [1], [0, 1, 0, 1], ks=(1, 2))
    assert r.p_at[1] == 0.0
    assert r.map == pytest.approx((1 / 2 + 2 / 4) / 2)


def test_label_mismatch():
    with pytest.raises(InvalidParameter):
        evaluate_ranking(np.zeros((2, 3)), [0, 1], [0, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 30), st.integers(1, 4), st.integers(0, 2**31), st.booleans())
def test_matches_brute_force(n_q, n_c, n_cls, seed, coarse):
    rng = np.random.default_rng(seed)
    sim = rng.normal(size=(n_q, n_c))
    if coarse:
        sim = np.round(sim)  # force ties
    ql, cl = rng.integers(0, n_cls, n_q), rng.integers(0, n_cls, n_c)
    r = evaluate_ranking(sim, ql, cl, ks=(1, 5, 10))
    ref_map, ref_p = brute_force_ranking(sim, ql, cl, (1, 5, 10))
    assert r.map == ref_map
    assert r.p_at == ref_p


def test_map_invariant_to_monotone_transform(rng):
    sim = rng.normal(size=(10, 40))
    ql, cl = rng.integers(0, 3, 10), rng.integers(0, 3, 40)
    a = evaluate_ranking(sim, ql, cl)
    b = evaluate_ranking(np.exp(3 * sim) + 2, ql, cl)
    assert a.map == b.map and a.p_at == b.p_at


def test_p1_equals_1nn_accuracy(rng):
    sim = rng.normal(size=(30, 80))
    ql, cl = rng.integers(0, 4, 30), rng.integers(0, 4, 80)
    acc = np.mean(knn_predict_scores(sim, cl, 1, 4) == ql)
    assert evaluate_ranking(sim, ql, cl, ks=(1,)).p_at[1] == pytest.approx(acc, abs=1e-15)


def test_fuse_examples(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    np.testing.assert_array_equal(fuse_scores([a, b], [1, 0]), a)
    np.testing.assert_array_equal(fuse_scores([a, -a]), np.zeros((3, 4)))
    with pytest.raises(InvalidParameter):
        fuse_scores([a, np.zeros((2, 4))])
    with pytest.raises(InvalidParameter):
        fuse_scores([a, b], [1.0])


def test_fuse_equals_concatenation(rng):
    qa, ca = rng.normal(size=(5, 6)), rng.normal(size=(8, 6))
    qb, cb = rng.normal(size=(5, 3)), rng.normal(size=(8, 3))
    early = similarity_matrix(np.hstack([qa, qb]), np.hstack([ca, cb]))
    late = fuse_scores([similarity_matrix(qa, ca), similarity_matrix(qb, cb)])
    np.testing.assert_allclose(early, late, atol=1e-12)


def test_fuse_linear(rng):
    a, b, c = (rng.normal(size=(4, 4)) for _ in range(3))
    zero = np.zeros_like(a)
    lhs = fuse_scores([2 * a + c, b])
    rhs = 2 * fuse_scores([a, zero]) + fuse_scores([c, zero]) + fuse_scores([zero, b])
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    np.testing.assert_allclose(fuse_scores([a, b], [2.0, -3.0]), 2 * a - 3 * b, atol=1e-12)


def test_class_score_fusion(rng):
    a, b = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    np.testing.assert_allclose(fuse_class_scores([a, b]), (a + b) / 2)
