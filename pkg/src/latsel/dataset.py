"""Dataset self-generation: sample, build, probe, time, infer, pack.

Files are UTF-8 CSV with a ``#`` header block::

    # latsel-dataset 1
    # kind: conv
    # features: N,L,C_i,C_o,K,S,M,U,N_d,N_m
    # seed: 7
    # load: {"enabled": false, ...}
    N,L,C_i,C_o,K,S,M,U,N_d,N_m,probe_flagged,latency_ms
    12,56,40,17,3,2,8589934592,0.25,1505280,6137,0,3.1416
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidConfig, MalformedHeader, SchemaMismatch, TooFewRecords
from .kernels import Clock, build_module, make_input, measure_latency
from .kinds import ModuleKind
from .load import LoadProfile, start_load_generator
from .params import (
    FULL_RANGES,
    Inferables,
    ParamSetVariant,
    SamplingConfig,
    SamplingRanges,
    compute_inferables,
    draw_config,
    record_features,
    variant_features,
)
from .probe import DeviceProbe, Probe, default_probe, probe_or_fallback

log = logging.getLogger(__name__)

FORMAT_TAG = "latsel-dataset"
FORMAT_VERSION = 1
SPLIT_PARTS = (7, 1, 2)


@dataclass(frozen=True)
class SampleRecord:
    kind: ModuleKind
    sampling: SamplingConfig
    measurable: DeviceProbe
    inferable: Inferables
    latency_ms: float
    probe_flagged: bool = False

    def __post_init__(self):
        if not self.latency_ms > 0:
            raise InvalidConfig(f"latency must be positive, got {self.latency_ms}")


def default_count(kind: ModuleKind) -> int:
    return 10_000 if kind.is_conv else 2_000


def generate_dataset(
    kind: ModuleKind,
    count: int | None = None,
    load: LoadProfile | None = None,
    seed: int = 0,
    *,
    ranges: SamplingRanges = FULL_RANGES,
    clock: Clock = time.perf_counter,
    probe: Probe | None = None,
    fallback: DeviceProbe = DeviceProbe(0, 0.0),
    warmups: int = 3,
    repeats: int = 7,
    progress: Callable[[int, int], None] | None = None,
) -> list[SampleRecord]:
    """Measure ``count`` random configurations of ``kind``, strictly one at a time."""
    count = default_count(kind) if count is None else count
    if count < 1:
        raise InvalidConfig("count must be >= 1")
    probe = probe or default_probe()
    rng = np.random.default_rng(seed)
    records: list[SampleRecord] = []
    handle = start_load_generator(load or LoadProfile())
    try:
        for i in range(count):
            cfg = draw_config(kind, rng, ranges)
            module_seed = int(rng.integers(2**31))
            module = build_module(kind, cfg, seed=module_seed)
            x = make_input(module, seed=module_seed)
            state, flagged = probe_or_fallback(probe, fallback)
            if flagged:
                log.warning("probe failed for %s sample %d; using fallback %s", kind, i, fallback)
            meas = measure_latency(module, x, warmups=warmups, repeats=repeats, clock=clock)
            records.append(
                SampleRecord(kind, cfg, state, compute_inferables(kind, cfg), meas.latency_ms, flagged)
            )
            del module, x
            if progress is not None:
                progress(i + 1, count)
    finally:
        handle.stop()
    return records


@dataclass
class DatasetSplit:
    train: list[SampleRecord]
    validation: list[SampleRecord]
    test: list[SampleRecord]
    seed: int
    ratios: tuple[float, float, float] = field(default=(0.7, 0.1, 0.2))


def split_dataset(records: Sequence[SampleRecord], seed: int) -> DatasetSplit:
    n = len(records)
    if n < 10:
        raise TooFewRecords(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    total = sum(SPLIT_PARTS)
    n_train = n * SPLIT_PARTS[0] // total
    n_val = n * SPLIT_PARTS[1] // total
    shuffled = [records[i] for i in order]
    return DatasetSplit(
        shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :], seed
    )


# --- persistence --------------------------------------------------------------

def _columns(kind: ModuleKind) -> list[str]:
    return list(variant_features(kind, ParamSetVariant.FULL)) + ["probe_flagged", "latency_ms"]


def _fmt(name: str, value) -> str:
    if name in ("U", "latency_ms"):
        return repr(float(value))
    return str(int(value))


def save_dataset(
    path: str | Path,
    records: Sequence[SampleRecord],
    *,
    kind: ModuleKind | None = None,
    seed: int | None = None,
    load: LoadProfile | None = None,
    ranges: SamplingRanges | None = None,
) -> None:
    kinds = {r.kind for r in records}
    if kind is not None:
        kinds.add(kind)
    if len(kinds) > 1:
        raise SchemaMismatch(f"one kind per dataset file, got {sorted(k.value for k in kinds)}")
    kind = next(iter(kinds), None)
    buf = io.StringIO()
    buf.write(f"# {FORMAT_TAG} {FORMAT_VERSION}\n")
    buf.write(f"# kind: {kind.value if kind else ''}\n")
    if kind is not None:
        buf.write(f"# features: {','.join(variant_features(kind, ParamSetVariant.FULL))}\n")
    buf.write(f"# seed: {'' if seed is None else seed}\n")
    buf.write(f"# load: {json.dumps((load or LoadProfile()).to_dict(), sort_keys=True)}\n")
    if ranges is not None:
        buf.write(f"# ranges: {json.dumps(ranges.to_dict(), sort_keys=True)}\n")
    if kind is not None:
        cols = _columns(kind)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            feats = record_features(r)
            feats["probe_flagged"] = int(r.probe_flagged)
            feats["latency_ms"] = r.latency_ms
            w.writerow([_fmt(c, feats[c]) for c in cols])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_header(path: str | Path) -> dict[str, str]:
    header: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
        parts = first.lstrip("# ").split()
        if not first.startswith("#") or len(parts) != 2 or parts[0] != FORMAT_TAG:
            raise MalformedHeader(f"{path}: not a latsel dataset")
        if parts[1] != str(FORMAT_VERSION):
            raise MalformedHeader(f"{path}: unsupported dataset version {parts[1]}")
        for line in f:
            if not line.startswith("#"):
                break
            key, sep, value = line[1:].strip().partition(":")
            if not sep:
                raise MalformedHeader(f"{path}: bad header line {line!r}")
            header[key.strip()] = value.strip()
    return header


def load_dataset(path: str | Path) -> list[SampleRecord]:
    header = read_header(path)
    if not header.get("kind"):
        return []
    try:
        kind = ModuleKind.parse(header["kind"])
    except ValueError as e:
        raise SchemaMismatch(f"{path}: {e}") from None
    expected = list(variant_features(kind, ParamSetVariant.FULL))
    if header.get("features", "").split(",") != expected:
        raise SchemaMismatch(f"{path}: feature order {header.get('features')!r} != {expected}")
    with open(path, encoding="utf-8") as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        cols = next(rows, None)
        if cols is None:
            return []
        if cols != _columns(kind):
            raise SchemaMismatch(f"{path}: columns {cols} != {_columns(kind)}")
        records = []
        for lineno, row in enumerate(rows, start=1):
            if len(row) != len(cols):
                raise SchemaMismatch(f"{path}: row {lineno} has {len(row)} fields, expected {len(cols)}")
            v = dict(zip(cols, row))
            cfg = SamplingConfig.from_features(kind, {k: int(v[k]) for k in expected if k not in ("M", "U", "N_d", "N_m")})
            inf = Inferables(int(v["N_d"]), int(v["N_m"]) if "N_m" in v else None)
            records.append(
                SampleRecord(
                    kind,
                    cfg,
                    DeviceProbe(int(v["M"]), float(v["U"])),
                    inf,
                    float(v["latency_ms"]),
                    bool(int(v["probe_flagged"])),
                )
            )
    return records


def dataset_path(data_dir: str | Path, kind: ModuleKind) -> Path:
    return Path(data_dir) / f"{kind.value}.csv"
