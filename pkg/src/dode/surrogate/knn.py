"""Multi-output k-nearest-neighbour regression (brute force, Euclidean)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KnnModel:
    k: int
    X: np.ndarray
    Y: np.ndarray

    @property
    def n_params(self) -> int:
        return self.k

    def predict(self, x) -> np.ndarray:
        return knn_predict(self, x)


def knn_fit(X, Y, k: int) -> KnnModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0:
        raise ValueError("empty dataset")
    if len(X) != len(Y):
        raise ValueError("inputs and targets differ in length")
    if not 1 <= k <= len(X):
        raise ValueError(f"need 1 <= k <= {len(X)}, got {k}")
    return KnnModel(int(k), X, Y)


def neighbours(model: KnnModel, q) -> np.ndarray:
    """Indices of the ``k`` stored points closest to ``q``, nearest first, ties by index."""
    dist = np.sum((model.X - q) ** 2, axis=1)
    return np.argsort(dist, kind="stable")[: model.k]


def knn_predict(model: KnnModel, x) -> np.ndarray:
    """Mean target of the ``k`` nearest stored inputs; batched over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Q = np.atleast_2d(x)
    if Q.shape[1] != model.X.shape[1]:
        raise ValueError(f"query width {Q.shape[1]} != {model.X.shape[1]}")
    out = np.array([model.Y[neighbours(model, q)].mean(axis=0) for q in Q])
    return out[0] if single else out
