"""Final-stage classifiers: KNN, one-vs-rest linear max-margin, NCC.

All tie rules are deterministic: distance ties prefer the lower training
index, vote ties go to the nearest tied neighbor, score and centroid ties go
to the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, TrainingDataError
from .mlpl import solve_multiclass_svm


@dataclass(frozen=True)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    k: int = 5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > self.X.shape[0]:
            raise TrainingDataError(
                f"k={self.k} exceeds the training size {self.X.shape[0]}"
            )


def knn_fit(X, y, k: int = 5) -> KnnModel:
    return KnnModel(X=np.asarray(X, dtype=np.float64),
                    y=np.asarray(y, dtype=np.int64), k=k)


def _check_dim(X_train: np.ndarray, x: np.ndarray) -> None:
    if x.shape[-1] != X_train.shape[1]:
        raise DimensionError(
            f"query dimension {x.shape[-1]} does not match training "
            f"dimension {X_train.shape[1]}"
        )


def knn_neighbors(model: KnnModel, x) -> np.ndarray:
    """Indices of the k nearest training points, sorted by (distance, index)."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model.X, x)
    dist = ((model.X - x) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(dist.size), dist))
    return order[:model.k]


def knn_votes(model: KnnModel, x) -> dict[int, int]:
    """Vote count per label among the k nearest neighbors."""
    neighbors = knn_neighbors(model, x)
    votes: dict[int, int] = {}
    for lab in model.y[neighbors]:
        votes[int(lab)] = votes.get(int(lab), 0) + 1
    return votes


def knn_predict(model: KnnModel, x) -> int:
    neighbors = knn_neighbors(model, x)
    labels = model.y[neighbors]
    values, counts = np.unique(labels, return_counts=True)
    top = counts.max()
    tied = set(values[counts == top].tolist())
    if len(tied) == 1:
        return int(next(iter(tied)))
    for lab in labels:  # nearest neighbor among tied labels decides
        if int(lab) in tied:
            return int(lab)
    raise AssertionError("unreachable: tied labels must appear among neighbors")


def knn_predict_batch(model: KnnModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.asarray([knn_predict(model, row) for row in X], dtype=np.int64)


@dataclass(frozen=True)
class NccModel:
    class_ids: tuple[int, ...]
    centroids: np.ndarray  # (m, d)


def ncc_fit(X, y) -> NccModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    class_ids = sorted(int(c) for c in np.unique(y))
    centroids = np.stack([X[y == c].mean(axis=0) for c in class_ids])
    return NccModel(class_ids=tuple(class_ids), centroids=centroids)


def ncc_predict(model: NccModel, x) -> int:
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model.centroids, x)
    dist = ((model.centroids - x) ** 2).sum(axis=1)
    return model.class_ids[int(np.argmin(dist))]


def ncc_predict_batch(model: NccModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.asarray([ncc_predict(model, row) for row in X], dtype=np.int64)


@dataclass(frozen=True)
class LinearClassifier:
    """One-vs-rest linear scores; row c of ``weights`` scores class_ids[c]."""

    class_ids: tuple[int, ...]
    weights: np.ndarray  # (m, d)
    c: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("classifier weights must be finite")


def linear_fit(X, y, c: float = 1.0, seed: int = 0, tol: float = 1e-4,
               max_epochs: int = 1000) -> LinearClassifier:
    """Binary hinge-loss training per class via the latent-pattern solver.

    Each one-vs-rest problem is the two-label max-margin solve (labels:
    0 = rest, 1 = class); the class score is w_1.x - w_0.x.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    class_ids = sorted(int(v) for v in np.unique(y))
    if len(class_ids) < 2:
        raise TrainingDataError("linear classifier needs at least two classes")
    rows = []
    for idx, cid in enumerate(class_ids):
        z = (y == cid).astype(np.int64)
        result, _ = solve_multiclass_svm(X, z, 2, alpha=c, seed=seed + idx,
                                         tol=tol, max_epochs=max_epochs)
        rows.append(result.weights[1] - result.weights[0])
    return LinearClassifier(class_ids=tuple(class_ids), weights=np.stack(rows), c=c)


def linear_scores(model: LinearClassifier, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model.weights, x)
    return model.weights @ x


def linear_predict(model: LinearClassifier, x) -> int:
    return model.class_ids[int(np.argmax(linear_scores(model, x)))]


def linear_predict_batch(model: LinearClassifier, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scores = X @ model.weights.T
    idx = np.argmax(scores, axis=1)
    ids = np.asarray(model.class_ids, dtype=np.int64)
    return ids[idx]
