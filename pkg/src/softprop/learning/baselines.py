"""Reference regressors for the benchmark: k-nearest neighbours and ridge-stabilised linear."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DatasetError, FitError


@dataclass
class KNNRegressor:
    X: np.ndarray
    Y: np.ndarray
    k: int = 5

    def __post_init__(self):
        if len(self.X) == 0:
            raise DatasetError("KNN needs at least one training sample")
        self.k = int(min(self.k, len(self.X)))
        self._tree = cKDTree(self.X)

    def predict(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, float))
        _, idx = self._tree.query(Xq, k=self.k)
        idx = idx.reshape(len(Xq), self.k)
        return self.Y[idx].mean(axis=1)


@dataclass
class LinearRegressor:
    W: np.ndarray  # (n_in + 1, n_out), last row is the intercept

    def predict(self, Xq):
        Xq = np.atleast_2d(np.asarray(Xq, float))
        return Xq @ self.W[:-1] + self.W[-1]


def fit_linear(X, Y, ridge: float = 1e-8) -> LinearRegressor:
    """Normal equations with a small ridge; ``ridge=0`` on a singular design raises FitError."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    if len(X) == 0:
        raise DatasetError("linear fit needs data")
    A = np.hstack([X, np.ones((len(X), 1))])
    G = A.T @ A
    if ridge > 0:
        G = G + ridge * np.eye(len(G))
    elif np.linalg.matrix_rank(G) < len(G):
        raise FitError("normal matrix is singular; use a positive ridge")
    return LinearRegressor(np.linalg.solve(G, A.T @ Y))


def baseline_fit(kind: str, X, Y, k: int = 5, ridge: float = 1e-8):
    kind = kind.lower()
    if kind == "knn":
        return KNNRegressor(np.asarray(X, float), np.asarray(Y, float), k)
    if kind == "linear":
        return fit_linear(X, Y, ridge)
    raise ValueError(f"unknown baseline {kind!r}")
