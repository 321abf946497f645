"""Native CPU kernels for the nine benchmark module kinds, plus latency timing.

All kernels run in float32 with no padding and dilation 1. Convolution and
pooling loop over the k*k window offsets and let numpy vectorize the rest,
which keeps memory at O(output) instead of materializing im2col columns.
"""
from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .kinds import ModuleKind
from .params import SamplingConfig, SamplingRanges, output_size, validate_config

DTYPE = np.float32
BN_EPS = 1e-5

Clock = Callable[[], float]
CLOCK_ENV_VAR = "LATSEL_CLOCK"


@dataclass(frozen=True)
class TensorShape:
    n: int
    c: int
    h: int = 1
    w: int = 1

    def __post_init__(self):
        if min(self.n, self.c, self.h, self.w) < 1:
            raise ShapeMismatch(f"all tensor dimensions must be >= 1, got {self}")

    @property
    def elements(self) -> int:
        return self.n * self.c * self.h * self.w


@dataclass
class ModuleInstance:
    kind: ModuleKind
    cfg: SamplingConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    @property
    def input_shape(self) -> TensorShape:
        if self.kind is ModuleKind.LINEAR:
            return TensorShape(self.cfg.n, self.cfg.c_in)
        return TensorShape(self.cfg.n, self.cfg.c_in, self.cfg.l, self.cfg.l)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def _uniform(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-0.5, 0.5, size=shape).astype(DTYPE)


def build_module(
    kind: ModuleKind, cfg: SamplingConfig, seed: int = 0, ranges: SamplingRanges | None = None
) -> ModuleInstance:
    """Construct a module with weights drawn uniformly from [-0.5, 0.5].

    Passing ``ranges`` additionally enforces the sampling ranges; without it
    only structural validity is checked (unit tests use c_in < 3).
    """
    validate_config(kind, cfg, ranges, strict=ranges is not None)
    rng = np.random.default_rng(seed)
    mod = ModuleInstance(kind, cfg)
    if kind.is_conv:
        mod.params["conv.weight"] = _uniform(rng, (cfg.c_out, cfg.c_in, cfg.k, cfg.k))
        mod.params["conv.bias"] = _uniform(rng, (cfg.c_out,))
    elif kind is ModuleKind.LINEAR:
        mod.params["linear.weight"] = _uniform(rng, (cfg.c_out, cfg.c_in))
        mod.params["linear.bias"] = _uniform(rng, (cfg.c_out,))
    if kind.has_bn:
        c = cfg.c_out if kind.is_conv else cfg.c_in
        mod.params["bn.gamma"] = _uniform(rng, (c,))
        mod.params["bn.beta"] = _uniform(rng, (c,))
        mod.buffers["bn.running_mean"] = _uniform(rng, (c,))
        # shifted to [0.5, 1.5]: variance must stay positive
        mod.buffers["bn.running_var"] = (1.0 + _uniform(rng, (c,))).astype(DTYPE)
    return mod


def make_input(module: ModuleInstance, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    s = module.input_shape
    shape = (s.n, s.c) if module.kind is ModuleKind.LINEAR else (s.n, s.c, s.h, s.w)
    return rng.uniform(-1.0, 1.0, size=shape).astype(DTYPE)


# --- primitive kernels -------------------------------------------------------

def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None, stride: int) -> np.ndarray:
    n, c_in, h, w = x.shape
    c_out, wc, kh, kw = weight.shape
    if wc != c_in:
        raise ShapeMismatch(f"conv expects {wc} input channels, got {c_in}")
    if kh > h or kw > w:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than input {h}x{w}")
    oh, ow = output_size(h, kh, stride), output_size(w, kw, stride)
    acc = np.zeros((c_out, n, oh, ow), dtype=DTYPE)
    for i in range(kh):
        for j in range(kw):
            patch = x[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride]
            acc += np.tensordot(weight[:, :, i, j], patch, axes=([1], [1]))
    out = acc.transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out, dtype=DTYPE)


def _pool(x: np.ndarray, k: int, stride: int, reduce: str) -> np.ndarray:
    n, c, h, w = x.shape
    if k > h or k > w:
        raise ShapeMismatch(f"pool window {k} larger than input {h}x{w}")
    oh, ow = output_size(h, k, stride), output_size(w, k, stride)
    out = None
    for i in range(k):
        for j in range(k):
            patch = x[:, :, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride]
            if out is None:
                out = patch.astype(DTYPE, copy=True)
            elif reduce == "max":
                np.maximum(out, patch, out=out)
            else:
                out += patch
    if reduce == "avg":
        out /= DTYPE(k * k)
    return out


def maxpool2d(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    return _pool(x, k, stride, "max")


def avgpool2d(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    return _pool(x, k, stride, "avg")


def batchnorm(
    x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, mean: np.ndarray, var: np.ndarray, eps: float = BN_EPS
) -> np.ndarray:
    if x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"bn expects {gamma.shape[0]} channels, got {x.shape[1]}")
    scale = (gamma / np.sqrt(var + DTYPE(eps))).astype(DTYPE)
    shift = (beta - mean * scale).astype(DTYPE)
    return x * scale[None, :, None, None] + shift[None, :, None, None]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, DTYPE(0))


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"linear expects {weight.shape[1]} features, got {x.shape[1]}")
    return (x @ weight.T + bias).astype(DTYPE)


def forward(module: ModuleInstance, x: np.ndarray) -> np.ndarray:
    expected = module.input_shape
    want = (expected.n, expected.c) if module.kind is ModuleKind.LINEAR else (
        expected.n, expected.c, expected.h, expected.w)
    if tuple(x.shape) != want:
        raise ShapeMismatch(f"{module.kind} expects input {want}, got {tuple(x.shape)}")
    kind, cfg, p = module.kind, module.cfg, module.params
    if kind is ModuleKind.LINEAR:
        return linear(x, p["linear.weight"], p["linear.bias"])
    if kind is ModuleKind.MAXPOOL:
        return maxpool2d(x, cfg.k, cfg.s)
    if kind is ModuleKind.AVGPOOL:
        return avgpool2d(x, cfg.k, cfg.s)
    out = x
    if kind.is_conv:
        out = conv2d(out, p["conv.weight"], p["conv.bias"], cfg.s)
    if kind.has_bn:
        b = module.buffers
        out = batchnorm(out, p["bn.gamma"], p["bn.beta"], b["bn.running_mean"], b["bn.running_var"])
    if kind.has_relu:
        out = relu(out)
    return out


# --- timing -------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyMeasurement:
    latency_ms: float
    repeats: int
    warmups: int


class FakeClock:
    """Deterministic clock for tests.

    Reads come in start/stop pairs; each stop read advances time by the next
    duration (milliseconds), cycling through ``durations_ms``.
    """

    def __init__(self, durations_ms: Iterable[float] = (1.0,), start: float = 0.0):
        self._durations = list(durations_ms)
        if not self._durations:
            raise ValueError("FakeClock needs at least one duration")
        self._i = 0
        self._now = start
        self._started = False
        self.reads = 0

    def _next_duration_ms(self) -> float:
        d = self._durations[self._i % len(self._durations)]
        self._i += 1
        return d

    def __call__(self) -> float:
        self.reads += 1
        if self._started:
            self._now += self._next_duration_ms() / 1e3
        self._started = not self._started
        return self._now


class SeededFakeClock(FakeClock):
    """Fake clock whose durations are log-normal draws from a seeded stream."""

    def __init__(self, seed: int, median_ms: float = 1.0, sigma: float = 0.5):
        super().__init__()
        self._rng = np.random.default_rng(seed)
        self._median = median_ms
        self._sigma = sigma

    def _next_duration_ms(self) -> float:
        return float(self._median * np.exp(self._sigma * self._rng.standard_normal()))


def parse_clock_spec(spec: str) -> Clock:
    """``system`` for perf_counter, ``fake:<seed>[:<median_ms>]`` for a seeded fake clock."""
    spec = spec.strip()
    if spec in ("", "system"):
        return time.perf_counter
    parts = spec.split(":")
    if parts[0] != "fake" or len(parts) not in (2, 3):
        raise ValueError(f"bad clock spec {spec!r}; expected system or fake:<seed>[:<median_ms>]")
    return SeededFakeClock(int(parts[1]), float(parts[2]) if len(parts) == 3 else 1.0)


def clock_from_env() -> Clock:
    return parse_clock_spec(os.environ.get(CLOCK_ENV_VAR, "system"))


def measure_latency(
    module: ModuleInstance,
    x: np.ndarray,
    warmups: int = 3,
    repeats: int = 7,
    clock: Clock = time.perf_counter,
) -> LatencyMeasurement:
    """Median wall-clock milliseconds of ``repeats`` forward passes after ``warmups`` untimed ones."""
    if warmups < 1 or repeats < 3:
        raise InvalidConfig(f"need warmups >= 1 and repeats >= 3, got {warmups}/{repeats}")
    for _ in range(warmups):
        forward(module, x)
    times = []
    for _ in range(repeats):
        t0 = clock()
        forward(module, x)
        times.append((clock() - t0) * 1e3)
    med = statistics.median(times)
    # a coarse clock can report 0 for very fast kernels
    if med <= 0:
        med = min((t for t in times if t > 0), default=1e-6)
    return LatencyMeasurement(float(med), repeats, warmups)

