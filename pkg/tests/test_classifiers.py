import numpy as np
import pytest

from mlcfl.classifiers import (
    knn_fit,
    knn_predict,
    knn_predict_batch,
    knn_votes,
    linear_fit,
    linear_predict,
    linear_predict_batch,
    linear_scores,
    ncc_fit,
    ncc_predict,
    ncc_predict_batch,
)
from mlcfl.errors import DimensionError, TrainingDataError


def knn_oracle(X, y, k, q):
    """Independent exhaustive scan with the documented tie rules."""
    dist = [float(((X[i] - q) ** 2).sum()) for i in range(len(X))]
    order = sorted(range(len(X)), key=lambda i: (dist[i], i))[:k]
    labels = [int(y[i]) for i in order]
    counts = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    top = max(counts.values())
    tied = {lab for lab, c in counts.items() if c == top}
    for lab in labels:
        if lab in tied:
            return lab
    raise AssertionError


class TestKnn:
    def test_query_on_training_point(self):
        X = np.array([[0.0, 0.0], [5.0, 5.0], [9.0, 0.0]])
        model = knn_fit(X, np.array([3, 7, 9]), k=1)
        assert knn_predict(model, X[1]) == 7

    def test_majority(self):
        X = np.vstack([np.zeros((3, 2)), np.ones((2, 2)) * 5])
        y = np.array([1, 1, 1, 2, 2])
        model = knn_fit(X, y, k=5)
        assert knn_predict(model, np.zeros(2)) == 1

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 4))
        y = rng.integers(0, 5, 200)
        model = knn_fit(X, y, k=5)
        for _ in range(60):
            q = rng.normal(size=4)
            assert knn_predict(model, q) == knn_oracle(X, y, 5, q)

    def test_distance_tie_lower_index(self):
        # two training points at the same distance from the query
        X = np.array([[1.0, 0.0], [-1.0, 0.0], [10.0, 0.0]])
        y = np.array([4, 8, 4])
        model = knn_fit(X, y, k=1)
        assert knn_predict(model, np.zeros(2)) == 4  # index 0 wins the tie

    def test_vote_tie_nearest_tied_label(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([9, 5, 5, 9])
        model = knn_fit(X, y, k=4)
        # votes 2:2; nearest neighbor of query 0.9 is label 9
        assert knn_predict(model, np.array([0.9])) == 9

    def test_translation_and_scale_invariance(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 3))
        y = rng.integers(0, 3, 50)
        queries = rng.normal(size=(10, 3))
        model = knn_fit(X, y, k=5)
        base = knn_predict_batch(model, queries)
        shift = rng.normal(size=3)
        shifted = knn_fit(X + shift, y, k=5)
        assert np.array_equal(knn_predict_batch(shifted, queries + shift), base)
        scaled = knn_fit(X * 3.7, y, k=5)
        assert np.array_equal(knn_predict_batch(scaled, queries * 3.7), base)

    def test_votes(self):
        X = np.array([[0.0], [0.1], [5.0]])
        model = knn_fit(X, np.array([1, 1, 2]), k=3)
        assert knn_votes(model, np.array([0.0])) == {1: 2, 2: 1}

    def test_k_bounds(self):
        X = np.zeros((3, 2))
        with pytest.raises(TrainingDataError):
            knn_fit(X, np.zeros(3, dtype=int), k=4)
        with pytest.raises(ValueError):
            knn_fit(X, np.zeros(3, dtype=int), k=0)

    def test_dimension_mismatch(self):
        model = knn_fit(np.zeros((4, 2)), np.zeros(4, dtype=int), k=1)
        with pytest.raises(DimensionError):
            knn_predict(model, np.zeros(3))


class TestNcc:
    def test_exact_centroid(self):
        rng = np.random.default_rng(2)
        X = np.vstack([rng.normal(0, 1, (10, 3)) + 5, rng.normal(0, 1, (10, 3)) - 5])
        y = np.array([1] * 10 + [2] * 10)
        model = ncc_fit(X, y)
        assert ncc_predict(model, model.centroids[1]) == 2

    def test_tie_lowest_class(self):
        X = np.array([[1.0, 0.0], [-1.0, 0.0]])
        y = np.array([3, 5])
        model = ncc_fit(X, y)
        assert ncc_predict(model, np.zeros(2)) == 3

    def test_centroids_match_means(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 4))
        y = rng.integers(0, 3, 60)
        model = ncc_fit(X, y)
        for i, c in enumerate(model.class_ids):
            assert np.allclose(model.centroids[i], X[y == c].mean(axis=0))

    def test_depends_only_on_means(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 2, 40)
        model = ncc_fit(X, y)
        # replace class 0 points by copies of their mean
        X2 = X.copy()
        X2[y == 0] = X[y == 0].mean(axis=0)
        model2 = ncc_fit(X2, y)
        queries = rng.normal(size=(20, 3))
        assert np.array_equal(ncc_predict_batch(model, queries),
                              ncc_predict_batch(model2, queries))


class TestLinear:
    def test_separable_two_class(self):
        rng = np.random.default_rng(5)
        X = np.vstack([rng.normal(0, 0.3, (20, 2)) + [4, 0],
                       rng.normal(0, 0.3, (20, 2)) - [4, 0]])
        y = np.array([0] * 20 + [1] * 20)
        model = linear_fit(X, y, c=10.0)
        assert np.array_equal(linear_predict_batch(model, X), y)

    def test_zero_input_lowest_class(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 3))
        y = rng.integers(2, 5, 30)
        y[:3] = 2
        y[3:6] = 3
        y[6:9] = 4
        model = linear_fit(X, y, c=1.0)
        assert linear_predict(model, np.zeros(3)) == 2

    def test_label_permutation_consistency(self):
        rng = np.random.default_rng(7)
        X = np.vstack([rng.normal(0, 0.2, (10, 3)) + c for c in
                       ([5, 0, 0], [0, 5, 0], [0, 0, 5])])
        y = np.repeat([0, 1, 2], 10)
        queries = rng.normal(0, 3, size=(15, 3))
        base = linear_predict_batch(linear_fit(X, y, c=10.0), queries)
        perm = {0: 2, 1: 0, 2: 1}
        y_perm = np.asarray([perm[v] for v in y])
        permuted = linear_predict_batch(linear_fit(X, y_perm, c=10.0), queries)
        assert np.array_equal(permuted, np.asarray([perm[v] for v in base]))

    def test_single_class_rejected(self):
        with pytest.raises(TrainingDataError):
            linear_fit(np.zeros((5, 2)), np.zeros(5, dtype=int), c=1.0)

    def test_score_shift_invariance(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 3, 30)
        model = linear_fit(X, y, c=1.0)
        shifted = type(model)(class_ids=model.class_ids,
                              weights=model.weights + rng.normal(size=4),
                              c=model.c)
        queries = rng.normal(size=(10, 4))
        assert np.array_equal(linear_predict_batch(model, queries),
                              linear_predict_batch(shifted, queries))

    def test_scores_shape(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(20, 3))
        y = rng.integers(0, 3, 20)
        model = linear_fit(X, y, c=1.0)
        assert linear_scores(model, X[0]).shape == (3,)
