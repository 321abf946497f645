"""Parameter taxonomy, config sampling, inferable features and min-max scaling.

Features fall in three groups: sampling parameters that construct the module
and its input, measurable device state (M, U) read right before timing, and
inferable values (N_d, N_m) derived from the other two. A schema picks a
subset of these per :class:`ParamSetVariant`.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyDataset, InvalidConfig, MissingFeature, SchemaMismatch
from .kinds import ModuleKind

if TYPE_CHECKING:
    from .dataset import SampleRecord

SAMPLING_ORDER: dict[ModuleKind, tuple[str, ...]] = {
    ModuleKind.AVGPOOL: ("N", "C_i", "L", "K", "S"),
    ModuleKind.BN: ("N", "L", "C_i"),
    ModuleKind.CONV: ("N", "L", "C_i", "C_o", "K", "S"),
    ModuleKind.LINEAR: ("N", "C_i", "C_o"),
    ModuleKind.MAXPOOL: ("N", "C_i", "L", "K", "S"),
}
MEASURABLE_ORDER: tuple[str, ...] = ("M", "U")

# feature name -> SamplingConfig attribute
_CFG_ATTR = {"N": "n", "C_i": "c_in", "C_o": "c_out", "K": "k", "S": "s", "L": "l"}


def sampling_features(kind: ModuleKind) -> tuple[str, ...]:
    return SAMPLING_ORDER[kind.base]


def inferable_features(kind: ModuleKind) -> tuple[str, ...]:
    return ("N_d",) if kind.is_pool else ("N_d", "N_m")


class ParamSetVariant(str, Enum):
    FULL = "FULL"
    NO_INFER = "NO_INFER"
    NO_MEASURE = "NO_MEASURE"
    RAW = "RAW"

    def __str__(self) -> str:
        return self.value


def variant_features(kind: ModuleKind, variant: ParamSetVariant) -> tuple[str, ...]:
    names = list(sampling_features(kind))
    if variant in (ParamSetVariant.FULL, ParamSetVariant.NO_INFER):
        names += MEASURABLE_ORDER
    if variant in (ParamSetVariant.FULL, ParamSetVariant.NO_MEASURE):
        names += inferable_features(kind)
    return tuple(names)


@dataclass(frozen=True)
class SamplingRanges:
    """Draw ranges for sampling parameters.

    The two budgets are optional rejection filters; ``None`` disables them.
    ``max_input_elements`` bounds the input tensor and ``max_macs`` bounds the
    multiply-accumulate count of one forward pass.
    """

    n: tuple[int, int] = (1, 64)
    channels: tuple[int, int] = (3, 512)
    kernels: tuple[int, ...] = (1, 3, 5, 7, 9)
    strides: tuple[int, ...] = (1, 2, 4)
    sizes: tuple[int, ...] = (224, 112, 56, 32, 28, 27, 14, 13, 8, 7)
    max_input_elements: int | None = None
    max_macs: int | None = None

    def to_dict(self) -> dict:
        return {
            "n": list(self.n),
            "channels": list(self.channels),
            "kernels": list(self.kernels),
            "strides": list(self.strides),
            "sizes": list(self.sizes),
            "max_input_elements": self.max_input_elements,
            "max_macs": self.max_macs,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SamplingRanges":
        return cls(
            n=tuple(d["n"]),
            channels=tuple(d["channels"]),
            kernels=tuple(d["kernels"]),
            strides=tuple(d["strides"]),
            sizes=tuple(d["sizes"]),
            max_input_elements=d.get("max_input_elements"),
            max_macs=d.get("max_macs"),
        )


FULL_RANGES = SamplingRanges()
# Same enumerations with a work budget so one forward pass stays well under a
# second on a single CPU core.
DESK_RANGES = SamplingRanges(max_input_elements=1 << 22, max_macs=1 << 27)
# Tiny shapes for background load jobs.
SMALL_RANGES = SamplingRanges(
    n=(1, 4), channels=(3, 32), sizes=(32, 28, 27, 14, 13, 8, 7), max_macs=1 << 22
)


@dataclass(frozen=True)
class SamplingConfig:
    n: int
    c_in: int
    c_out: int | None = None
    k: int | None = None
    s: int | None = None
    l: int | None = None

    def value(self, name: str) -> int:
        v = getattr(self, _CFG_ATTR[name])
        if v is None:
            raise MissingFeature(name)
        return v

    def as_features(self, kind: ModuleKind) -> dict[str, int]:
        return {name: self.value(name) for name in sampling_features(kind)}

    @classmethod
    def from_features(cls, kind: ModuleKind, values: Mapping[str, float]) -> "SamplingConfig":
        kwargs = {}
        for name in sampling_features(kind):
            if name not in values:
                raise MissingFeature(name)
            kwargs[_CFG_ATTR[name]] = int(values[name])
        return cls(**kwargs)


def output_size(l: int, k: int, s: int) -> int:
    return (l - k) // s + 1


def validate_config(
    kind: ModuleKind, cfg: SamplingConfig, ranges: SamplingRanges | None = None, *, strict: bool = False
) -> None:
    """Raise InvalidConfig unless ``cfg`` can build a module of ``kind``.

    Structural checks always apply. With ``strict`` the values must also lie
    inside ``ranges`` (default: the full ranges) and its budgets.
    """
    wanted = set(_CFG_ATTR[f] for f in sampling_features(kind))
    for attr in _CFG_ATTR.values():
        present = getattr(cfg, attr) is not None
        if present != (attr in wanted):
            raise InvalidConfig(f"{kind}: field {attr!r} {'missing' if not present else 'not applicable'}")
    if cfg.n < 1 or cfg.c_in < 1 or (cfg.c_out is not None and cfg.c_out < 1):
        raise InvalidConfig(f"{kind}: sizes must be >= 1 ({cfg})")
    if cfg.l is not None and cfg.l < 1:
        raise InvalidConfig(f"{kind}: l must be >= 1")
    if cfg.k is not None:
        if cfg.k < 1 or cfg.s < 1:
            raise InvalidConfig(f"{kind}: k and s must be >= 1")
        if cfg.k > cfg.l:
            raise InvalidConfig(f"{kind}: kernel {cfg.k} exceeds spatial size {cfg.l}")
    if not strict:
        return
    r = ranges or FULL_RANGES
    if not r.n[0] <= cfg.n <= r.n[1]:
        raise InvalidConfig(f"n={cfg.n} outside {r.n}")
    for ch in (cfg.c_in, cfg.c_out):
        if ch is not None and not r.channels[0] <= ch <= r.channels[1]:
            raise InvalidConfig(f"channel count {ch} outside {r.channels}")
    if cfg.k is not None and (cfg.k not in r.kernels or cfg.s not in r.strides):
        raise InvalidConfig(f"k={cfg.k}, s={cfg.s} not in {r.kernels}/{r.strides}")
    if cfg.l is not None and cfg.l not in r.sizes:
        raise InvalidConfig(f"l={cfg.l} not in {r.sizes}")
    if not within_budget(kind, cfg, r):
        raise InvalidConfig(f"{kind}: {cfg} exceeds the work budget")


def forward_macs(kind: ModuleKind, cfg: SamplingConfig) -> int:
    """Multiply-accumulate estimate for one forward pass (elementwise ops count 1)."""
    if kind is ModuleKind.LINEAR:
        return cfg.n * cfg.c_in * cfg.c_out
    if kind.is_pool:
        o = output_size(cfg.l, cfg.k, cfg.s)
        return cfg.n * cfg.c_in * o * o * cfg.k * cfg.k
    if kind.is_conv:
        o = output_size(cfg.l, cfg.k, cfg.s)
        return cfg.n * cfg.c_out * o * o * cfg.c_in * cfg.k * cfg.k
    return cfg.n * cfg.c_in * cfg.l * cfg.l


def input_elements(kind: ModuleKind, cfg: SamplingConfig) -> int:
    if kind is ModuleKind.LINEAR:
        return cfg.n * cfg.c_in
    return cfg.n * cfg.c_in * cfg.l * cfg.l


def within_budget(kind: ModuleKind, cfg: SamplingConfig, ranges: SamplingRanges) -> bool:
    if ranges.max_input_elements is not None and input_elements(kind, cfg) > ranges.max_input_elements:
        return False
    if ranges.max_macs is not None and forward_macs(kind, cfg) > ranges.max_macs:
        return False
    return True


def _draw(kind: ModuleKind, rng: np.random.Generator, r: SamplingRanges) -> SamplingConfig:
    kw: dict[str, int] = {}
    for name in sampling_features(kind):
        if name == "N":
            v = rng.integers(r.n[0], r.n[1] + 1)
        elif name in ("C_i", "C_o"):
            v = rng.integers(r.channels[0], r.channels[1] + 1)
        elif name == "K":
            v = r.kernels[rng.integers(len(r.kernels))]
        elif name == "S":
            v = r.strides[rng.integers(len(r.strides))]
        else:
            v = r.sizes[rng.integers(len(r.sizes))]
        kw[_CFG_ATTR[name]] = int(v)
    return SamplingConfig(**kw)


def draw_config(
    kind: ModuleKind, rng: np.random.Generator, ranges: SamplingRanges = FULL_RANGES, max_tries: int = 100_000
) -> SamplingConfig:
    """Uniform independent draws from ``rng``, rejecting k > l and over-budget configs."""
    for _ in range(max_tries):
        cfg = _draw(kind, rng, ranges)
        if cfg.k is not None and cfg.k > cfg.l:
            continue
        if within_budget(kind, cfg, ranges):
            return cfg
    raise InvalidConfig(f"no admissible {kind} config after {max_tries} draws; budget too tight?")


def sample_config(kind: ModuleKind, rng_seed: int, ranges: SamplingRanges = FULL_RANGES) -> SamplingConfig:
    return draw_config(kind, np.random.default_rng(rng_seed), ranges)


@dataclass(frozen=True)
class Inferables:
    n_d: int
    n_m: int | None = None

    def as_features(self, kind: ModuleKind) -> dict[str, int]:
        out = {"N_d": self.n_d}
        if not kind.is_pool:
            out["N_m"] = self.n_m
        return out


def compute_inferables(kind: ModuleKind, cfg: SamplingConfig) -> Inferables:
    n_d = input_elements(kind, cfg)
    if kind.is_pool:
        return Inferables(n_d=n_d)
    n_m = 0
    if kind is ModuleKind.LINEAR:
        n_m = cfg.c_out * cfg.c_in + cfg.c_out
    elif kind.is_conv:
        n_m = cfg.c_out * cfg.c_in * cfg.k * cfg.k + cfg.c_out
        if kind.has_bn:
            n_m += 2 * cfg.c_out
    else:
        n_m = 2 * cfg.c_in
    return Inferables(n_d=n_d, n_m=n_m)


@dataclass(frozen=True)
class FeatureSchema:
    kind: ModuleKind
    variant: ParamSetVariant
    names: tuple[str, ...]
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.names) == len(self.mins) == len(self.maxs)):
            raise SchemaMismatch("names/mins/maxs lengths differ")
        for name, lo, hi in zip(self.names, self.mins, self.maxs):
            if lo > hi:
                raise SchemaMismatch(f"bounds for {name} inverted: {lo} > {hi}")

    @property
    def width(self) -> int:
        return len(self.names)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "variant": self.variant.value,
            "names": list(self.names),
            "mins": list(self.mins),
            "maxs": list(self.maxs),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        return cls(
            kind=ModuleKind.parse(d["kind"]),
            variant=ParamSetVariant(d["variant"]),
            names=tuple(d["names"]),
            mins=tuple(float(v) for v in d["mins"]),
            maxs=tuple(float(v) for v in d["maxs"]),
        )

    def scale(self, raw: np.ndarray) -> np.ndarray:
        """Min-max scale a (n, width) or (width,) array, clamping into [0, 1]."""
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape[-1] != self.width:
            raise SchemaMismatch(f"expected {self.width} features, got {raw.shape[-1]}")
        lo = np.asarray(self.mins)
        span = np.asarray(self.maxs) - lo
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span > 0, (raw - lo) / safe, 0.0)
        return np.clip(out, 0.0, 1.0)

    def unscale(self, scaled: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.mins)
        return lo + np.asarray(scaled, dtype=np.float64) * (np.asarray(self.maxs) - lo)


def record_features(record: "SampleRecord") -> dict[str, float]:
    """Every feature a record carries, by canonical name."""
    values: dict[str, float] = dict(record.sampling.as_features(record.kind))
    values["M"] = record.measurable.available_memory_bytes
    values["U"] = record.measurable.utilization
    values.update(record.inferable.as_features(record.kind))
    return values


def raw_matrix(records: Sequence["SampleRecord"], names: Sequence[str]) -> np.ndarray:
    rows = []
    for r in records:
        feats = record_features(r)
        try:
            rows.append([float(feats[n]) for n in names])
        except KeyError as e:
            raise MissingFeature(str(e)) from None
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))


def build_schema(kind: ModuleKind, variant: ParamSetVariant, dataset: Iterable["SampleRecord"]) -> FeatureSchema:
    """Per-feature bounds over ``dataset``; pass the training split only."""
    records = list(dataset)
    if not records:
        raise EmptyDataset(f"cannot build a {kind} schema from zero records")
    for r in records:
        if r.kind is not kind:
            raise SchemaMismatch(f"record of kind {r.kind} in a {kind} dataset")
    names = variant_features(kind, variant)
    X = raw_matrix(records, names)
    return FeatureSchema(kind, variant, names, tuple(X.min(axis=0).tolist()), tuple(X.max(axis=0).tolist()))


def vectorize(record: "SampleRecord", schema: FeatureSchema) -> np.ndarray:
    if record.kind is not schema.kind:
        raise SchemaMismatch(f"record kind {record.kind} does not match schema kind {schema.kind}")
    return schema.scale(raw_matrix([record], schema.names)[0])


def vectorize_many(records: Sequence["SampleRecord"], schema: FeatureSchema) -> np.ndarray:
    for r in records:
        if r.kind is not schema.kind:
            raise SchemaMismatch(f"record kind {r.kind} does not match schema kind {schema.kind}")
    return schema.scale(raw_matrix(records, schema.names))


def features_from_mapping(values: Mapping[str, float], schema: FeatureSchema) -> np.ndarray:
    missing = [n for n in schema.names if n not in values]
    if missing:
        raise MissingFeature(", ".join(missing))
    return schema.scale(np.array([float(values[n]) for n in schema.names]))

