"""Trained regressor: feature schema + target scaling + one estimator core."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from ..errors import DimensionMismatch
from ..params import FeatureSchema, vectorize_many
from .forest import Forest
from .ids import RegressorId
from .linear import LinearModel
from .nets import MEDNNet, MLPNet

Core = Union[LinearModel, MLPNet, MEDNNet, Forest]


@dataclass
class Regressor:
    rid: RegressorId
    schema: FeatureSchema
    target_min: float
    target_max: float
    core: Core
    history: dict = field(default_factory=dict, compare=False)

    @property
    def kind(self):
        return self.schema.kind

    def scale_target(self, y) -> np.ndarray:
        span = self.target_max - self.target_min
        y = np.asarray(y, dtype=np.float64)
        return (y - self.target_min) / span if span > 0 else np.zeros_like(y)

    def unscale_target(self, s) -> np.ndarray:
        return self.target_min + np.asarray(s, dtype=np.float64) * (self.target_max - self.target_min)

    def predict_scaled(self, xs: np.ndarray) -> np.ndarray:
        """Scaled-target predictions for scaled feature rows."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D batch, got shape {xs.shape}")
        if xs.shape[0] == 0:
            if xs.shape[1] not in (0, self.schema.width):
                raise DimensionMismatch(f"expected {self.schema.width} features, got {xs.shape[1]}")
            return np.zeros(0)
        if xs.shape[1] != self.schema.width:
            raise DimensionMismatch(f"expected {self.schema.width} features, got {xs.shape[1]}")
        return self.core.predict(xs)

    def predict_batch(self, xs) -> np.ndarray:
        """Latency (ms) for each scaled feature row."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.size == 0 and xs.ndim < 2:
            return np.zeros(0)
        return self.unscale_target(self.predict_scaled(xs))

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionMismatch(f"expected one feature vector, got shape {x.shape}")
        return float(self.predict_batch(x[None, :])[0])

    def predict_records(self, records: Sequence) -> np.ndarray:
        return self.predict_batch(vectorize_many(records, self.schema))
