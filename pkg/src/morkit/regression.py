"""Regression of high-mode coefficients from low-mode coefficients."""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, InsufficientData
from .features import FeatureMap


def fit_least_squares(features, targets):
    """Weights minimizing ||W @ features - targets||_F.

    Rank-revealing (SVD-based) solve; rank deficiency resolves to the
    minimal-norm solution.
    """
    F = np.atleast_2d(np.asarray(features, dtype=float))
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    if F.shape[1] != T.shape[1]:
        raise DimensionMismatch(
            f"{F.shape[1]} feature columns vs {T.shape[1]} target columns"
        )
    W, *_ = np.linalg.lstsq(F.T, T.T, rcond=None)
    return W.T


@dataclass
class PolynomialRegressor:
    """Least-squares polynomial map between coefficient blocks.

    Inputs are affinely rescaled to the unit box seen during training;
    without this, high-degree monomial features are hopelessly conditioned.
    """

    degree: int = 2
    feature_map: FeatureMap = None
    weights: np.ndarray = None
    _center: np.ndarray = None
    _halfwidth: np.ndarray = None

    def _normalize(self, X):
        return (X - self._center[:, None]) / self._halfwidth[:, None]

    def fit(self, inputs, targets):
        X = np.atleast_2d(inputs)
        self.feature_map = FeatureMap("polynomial", X.shape[0], degree=self.degree)
        if X.shape[1] < self.feature_map.output_dim:
            raise InsufficientData(
                f"{X.shape[1]} samples for {self.feature_map.output_dim} polynomial features"
            )
        lo, hi = X.min(axis=1), X.max(axis=1)
        self._center = 0.5 * (lo + hi)
        self._halfwidth = np.maximum(0.5 * (hi - lo), 1e-30)
        self.weights = fit_least_squares(self.feature_map(self._normalize(X)), targets)
        return self

    def predict(self, inputs):
        X = np.asarray(inputs, dtype=float)
        single = X.ndim == 1
        out = self.weights @ self.feature_map(self._normalize(X[:, None] if single else X))
        return out[:, 0] if single else out


@dataclass
class NearestNeighborRegressor:
    """k-nearest-neighbor average in coefficient space."""

    k: int = 5
    _tree: cKDTree = field(default=None, repr=False)
    _targets: np.ndarray = None

    def fit(self, inputs, targets):
        X = np.atleast_2d(inputs)
        if X.shape[1] < self.k:
            raise InsufficientData(f"{X.shape[1]} samples for k={self.k} neighbors")
        self._tree = cKDTree(X.T)
        self._targets = np.atleast_2d(targets)
        return self

    def predict(self, inputs):
        X = np.asarray(inputs, dtype=float)
        single = X.ndim == 1
        pts = (X[:, None] if single else X).T
        _, idx = self._tree.query(pts, k=self.k)
        idx = np.asarray(idx).reshape(len(pts), self.k)
        out = np.stack([self._targets[:, row].mean(axis=1) for row in idx], axis=1)
        return out[:, 0] if single else out


def make_regressor(spec, **params):
    """Regressor factory: ``polynomial(degree)`` or ``nearest_neighbor(k)``."""
    if spec == "polynomial":
        return PolynomialRegressor(degree=int(params.get("degree", 2)))
    if spec == "nearest_neighbor":
        return NearestNeighborRegressor(k=int(params.get("k", 5)))
    raise DimensionMismatch(f"unknown regressor spec {spec!r}")
