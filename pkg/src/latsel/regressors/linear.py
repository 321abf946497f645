from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch


class LinearModel:
    """Ordinary least squares with intercept, solved in closed form."""

    def __init__(self, coef: np.ndarray, intercept: float):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.intercept = float(intercept)

    @property
    def input_dim(self) -> int:
        return self.coef.shape[0]

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "LinearModel":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A = np.hstack([X, np.ones((X.shape[0], 1))])
        sol, *_ = np.linalg.lstsq(A, np.asarray(y, dtype=np.float64), rcond=None)
        return cls(sol[:-1], sol[-1])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise DimensionMismatch(f"expected {self.input_dim} features, got {X.shape[1]}")
        return np.einsum("ij,j->i", X, self.coef) + self.intercept

    def round_to_float32(self) -> None:
        self.coef = self.coef.astype(np.float32).astype(np.float64)
        self.intercept = float(np.float32(self.intercept))
