"""Test-split metrics: Pk-accuracy, R^2, RMSE, time per sample, model size."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch, NonPositiveTruth, ZeroVariance
from .kernels import Clock
from .kinds import ModuleKind
from .params import vectorize_many
from .regressors.ids import RegressorId
from .regressors.io import model_bytes
from .regressors.model import Regressor

# relative slack so that decimal boundaries such as 12 vs 10 at k=20 count as inside
_BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class EvalResult:
    module: ModuleKind
    regressor: RegressorId
    acc: float
    acc10: float
    r: float
    rmse: float
    tps_ms: float
    size_kb: float

    def to_dict(self) -> dict:
        return {
            "module": self.module.value,
            "regressor": self.regressor.label,
            "acc": self.acc,
            "acc10": self.acc10,
            "r": self.r,
            "rmse": self.rmse,
            "tps_ms": self.tps_ms,
            "size_kb": self.size_kb,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        return cls(
            ModuleKind.parse(d["module"]),
            RegressorId.parse(d["regressor"]),
            float(d["acc"]),
            float(d.get("acc10", 0.0)),
            float(d["r"]),
            float(d.get("rmse", 0.0)),
            float(d["tps_ms"]),
            float(d["size_kb"]),
        )


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(truth, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if len(t) != len(p):
        raise LengthMismatch(f"truth has {len(t)} values, prediction {len(p)}")
    if len(t) == 0:
        raise LengthMismatch("empty inputs")
    return t, p


def pk_accuracy(truth, pred, k: float = 20.0) -> float:
    """Fraction of samples whose relative error is at most k percent (inclusive)."""
    t, p = _pair(truth, pred)
    if np.any(t <= 0):
        raise NonPositiveTruth("Pk-accuracy needs strictly positive ground truth")
    ok = np.abs(p - t) <= (k / 100.0) * t * (1 + _BOUNDARY_SLACK)
    return float(np.count_nonzero(ok)) / len(t)


def r_squared(truth, pred) -> float:
    t, p = _pair(truth, pred)
    if len(t) < 2:
        raise LengthMismatch("R^2 needs at least two samples")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVariance("ground truth has zero variance")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot


def rmse(truth, pred) -> float:
    t, p = _pair(truth, pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def time_per_sample(
    model: Regressor, test_inputs: np.ndarray, warmups: int = 2, repeats: int = 5, clock: Clock = time.perf_counter
) -> float:
    """Median over ``repeats`` of (one predict_batch pass over the inputs) / sample count, in ms."""
    xs = np.asarray(test_inputs, dtype=np.float64)
    n = len(xs)
    if n < 10:
        raise LengthMismatch(f"need at least 10 inputs to time, got {n}")
    for _ in range(warmups):
        model.predict_batch(xs)
    per_sample = []
    for _ in range(repeats):
        t0 = clock()
        model.predict_batch(xs)
        per_sample.append((clock() - t0) * 1e3 / n)
    tps = statistics.median(per_sample)
    return tps if tps > 0 else min((v for v in per_sample if v > 0), default=1e-9)


def evaluate(
    model: Regressor,
    kind: ModuleKind,
    test: Sequence,
    *,
    clock: Clock = time.perf_counter,
    warmups: int = 2,
    repeats: int = 5,
) -> EvalResult:
    """Metrics over ``test`` records (pass the test split; a DatasetSplit is also accepted)."""
    records = list(getattr(test, "test", test))
    X = vectorize_many(records, model.schema)
    truth = np.array([r.latency_ms for r in records])
    pred_scaled = model.predict_scaled(X)
    pred = model.unscale_target(pred_scaled)
    truth_scaled = model.scale_target(truth)
    return EvalResult(
        module=kind,
        regressor=model.rid,
        acc=pk_accuracy(truth, pred, 20),
        acc10=pk_accuracy(truth, pred, 10),
        r=r_squared(truth_scaled, pred_scaled),
        rmse=rmse(truth_scaled, pred_scaled),
        tps_ms=time_per_sample(model, X, warmups, repeats, clock),
        size_kb=len(model_bytes(model)) / 1024.0,
    )


METRIC_FIELDS = ("acc", "acc10", "r", "rmse", "tps_ms", "size_kb")


def averages(results: Sequence[EvalResult]) -> dict[str, dict[str, float]]:
    """Arithmetic mean of each metric across modules, per regressor label."""
    by_rid: dict[str, list[EvalResult]] = {}
    for res in results:
        by_rid.setdefault(res.regressor.label, []).append(res)
    return {
        label: {f: float(np.mean([getattr(r, f) for r in rows])) for f in METRIC_FIELDS}
        for label, rows in sorted(by_rid.items())
    }
