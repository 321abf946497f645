"""Per-module regressor auto-selection.

For each module: keep every candidate whose accuracy is within ``epsilon_a``
of the best, then among those every candidate whose R^2 is within
``epsilon_r`` of the best survivor, and finally pick the one with the
smallest time-per-sample or model size. Accuracy is filtered before R^2, so
a high-R^2 model outside the accuracy band can never win. Ties at any
argmax/argmin go to the lexicographically smallest regressor label.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import DuplicatePair, EmptyResults, UnknownModule
from .kinds import ModuleKind
from .metrics import EvalResult
from .regressors.ids import RegressorId


class Objective(str, Enum):
    TIME_PER_SAMPLE = "time"
    MODEL_SIZE = "space"

    def value_of(self, res: EvalResult) -> float:
        return res.tps_ms if self is Objective.TIME_PER_SAMPLE else res.size_kb

    @classmethod
    def parse(cls, text: str) -> "Objective":
        t = text.strip().lower()
        aliases = {"time": cls.TIME_PER_SAMPLE, "tps": cls.TIME_PER_SAMPLE, "time_per_sample": cls.TIME_PER_SAMPLE,
                   "space": cls.MODEL_SIZE, "size": cls.MODEL_SIZE, "model_size": cls.MODEL_SIZE}
        if t not in aliases:
            raise ValueError(f"unknown objective {text!r}")
        return aliases[t]


@dataclass(frozen=True)
class SelectionConfig:
    epsilon_a: float = 0.05
    epsilon_r: float = 0.05
    objective: Objective = Objective.TIME_PER_SAMPLE

    def __post_init__(self):
        if self.epsilon_a < 0 or self.epsilon_r < 0:
            raise ValueError("tolerances must be non-negative")


@dataclass(frozen=True)
class Audit:
    module: ModuleKind
    candidates: tuple[str, ...]
    acc_leader: str
    acc_band: tuple[str, ...]
    r_leader: str
    r_band: tuple[str, ...]
    winner: str
    objective: Objective
    objective_values: dict[str, float]
    ties: tuple[str, ...] = ()

    @property
    def eliminated_by_accuracy(self) -> tuple[str, ...]:
        return tuple(c for c in self.candidates if c not in self.acc_band)

    @property
    def eliminated_by_r2(self) -> tuple[str, ...]:
        return tuple(c for c in self.acc_band if c not in self.r_band)

    def to_dict(self) -> dict:
        return {
            "module": self.module.value,
            "candidates": list(self.candidates),
            "acc_leader": self.acc_leader,
            "acc_band": list(self.acc_band),
            "r_leader": self.r_leader,
            "r_band": list(self.r_band),
            "winner": self.winner,
            "objective": self.objective.value,
            "objective_values": dict(self.objective_values),
            "ties": list(self.ties),
        }


@dataclass
class SelectionMap:
    config: SelectionConfig
    mapping: dict[ModuleKind, RegressorId] = field(default_factory=dict)
    audits: dict[ModuleKind, Audit] = field(default_factory=dict)

    def __getitem__(self, module: ModuleKind) -> RegressorId:
        return self.mapping[module]

    def labels(self) -> dict[str, str]:
        return {m.value: rid.label for m, rid in sorted(self.mapping.items(), key=lambda kv: kv[0].value)}


def _best(rows: Sequence[EvalResult], key, maximize: bool) -> tuple[EvalResult, bool]:
    """Best row by ``key``, smallest label on ties; also reports whether a tie occurred."""
    target = max(key(r) for r in rows) if maximize else min(key(r) for r in rows)
    tied = sorted((r for r in rows if key(r) == target), key=lambda r: r.regressor.label)
    return tied[0], len(tied) > 1


def _select_module(module: ModuleKind, rows: list[EvalResult], cfg: SelectionConfig) -> Audit:
    rows = sorted(rows, key=lambda r: r.regressor.label)
    ties = []
    y1, tie = _best(rows, lambda r: r.acc, maximize=True)
    if tie:
        ties.append("accuracy")
    band1 = [r for r in rows if y1.acc - r.acc <= cfg.epsilon_a]
    y2, tie = _best(band1, lambda r: r.r, maximize=True)
    if tie:
        ties.append("r2")
    band2 = [r for r in band1 if y2.r - r.r <= cfg.epsilon_r]
    ys, tie = _best(band2, cfg.objective.value_of, maximize=False)
    if tie:
        ties.append("objective")
    return Audit(
        module=module,
        candidates=tuple(r.regressor.label for r in rows),
        acc_leader=y1.regressor.label,
        acc_band=tuple(r.regressor.label for r in band1),
        r_leader=y2.regressor.label,
        r_band=tuple(r.regressor.label for r in band2),
        winner=ys.regressor.label,
        objective=cfg.objective,
        objective_values={r.regressor.label: cfg.objective.value_of(r) for r in band2},
        ties=tuple(ties),
    )


def auto_select(results: Iterable[EvalResult], cfg: SelectionConfig = SelectionConfig()) -> SelectionMap:
    results = list(results)
    if not results:
        raise EmptyResults("no evaluation results to select from")
    dup = [pair for pair, c in Counter((r.module, r.regressor.label) for r in results).items() if c > 1]
    if dup:
        raise DuplicatePair(f"duplicate (module, regressor) pairs: {sorted((m.value, l) for m, l in dup)}")
    by_module: dict[ModuleKind, list[EvalResult]] = {}
    for r in results:
        by_module.setdefault(r.module, []).append(r)
    sel = SelectionMap(cfg)
    for module in sorted(by_module, key=lambda m: m.value):
        audit = _select_module(module, by_module[module], cfg)
        sel.audits[module] = audit
        sel.mapping[module] = RegressorId.parse(audit.winner)
    return sel


def explain_selection(selection: SelectionMap, module: ModuleKind) -> Audit:
    if module not in selection.audits:
        raise UnknownModule(f"module {module} not in selection")
    return selection.audits[module]


def baseline_delta(
    results: Sequence[EvalResult], selection: SelectionMap, baseline: RegressorId
) -> dict[str, float | list[str]]:
    """Mean over modules of the percent change from the baseline regressor to the selected one.

    Modules where the baseline was not evaluated are skipped and listed.
    """
    index = {(r.module, r.regressor.label): r for r in results}
    deltas: dict[str, list[float]] = {"acc": [], "r": [], "tps_ms": [], "size_kb": []}
    skipped = []
    for module, rid in selection.mapping.items():
        base = index.get((module, baseline.label))
        if base is None:
            skipped.append(module.value)
            continue
        chosen = index[(module, rid.label)]
        for f in deltas:
            b = getattr(base, f)
            deltas[f].append(0.0 if b == 0 else 100.0 * (getattr(chosen, f) - b) / abs(b))
    out: dict[str, float | list[str]] = {
        f"{f}_pct": (sum(v) / len(v) if v else 0.0) for f, v in deltas.items()
    }
    out["skipped"] = sorted(skipped)
    return out
