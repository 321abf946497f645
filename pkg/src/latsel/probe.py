"""Device state readings: available memory and CPU utilization."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable

from .errors import ProbeUnavailable

ENV_VAR = "LATSEL_PROBE"


@dataclass(frozen=True)
class DeviceProbe:
    available_memory_bytes: int
    utilization: float

    def __post_init__(self):
        if self.available_memory_bytes < 0:
            raise ValueError("available memory cannot be negative")
        if not 0.0 <= self.utilization <= 1.0:
            raise ValueError(f"utilization {self.utilization} outside [0, 1]")


Probe = Callable[[], DeviceProbe]


class FakeProbe:
    def __init__(self, memory_bytes: int, utilization: float):
        self.value = DeviceProbe(int(memory_bytes), float(utilization))
        self.calls = 0

    def __call__(self) -> DeviceProbe:
        self.calls += 1
        return self.value


class FailingProbe:
    """Always raises; exercises the fallback path."""

    def __call__(self) -> DeviceProbe:
        raise ProbeUnavailable("probe disabled")


class SystemProbe:
    def __init__(self):
        import psutil

        self._psutil = psutil
        # first cpu_percent(None) call only primes the counters
        psutil.cpu_percent(interval=None)

    def __call__(self) -> DeviceProbe:
        try:
            mem = self._psutil.virtual_memory().available
            util = self._psutil.cpu_percent(interval=None) / 100.0
        except Exception as e:  # psutil raises platform-specific errors
            raise ProbeUnavailable(str(e)) from e
        return DeviceProbe(int(mem), min(max(float(util), 0.0), 1.0))


def parse_probe_spec(spec: str) -> Probe:
    """``fake:<mem_bytes>:<util>`` or ``system``."""
    spec = spec.strip()
    if spec in ("", "system", "live"):
        return SystemProbe()
    parts = spec.split(":")
    if parts[0] != "fake" or len(parts) != 3:
        raise ValueError(f"bad probe spec {spec!r}; expected fake:<mem_bytes>:<util>")
    return FakeProbe(int(parts[1]), float(parts[2]))


def default_probe() -> Probe:
    return parse_probe_spec(os.environ.get(ENV_VAR, "system"))


def probe_device(probe: Probe | None = None) -> DeviceProbe:
    return (probe or default_probe())()


def probe_or_fallback(probe: Probe, fallback: DeviceProbe) -> tuple[DeviceProbe, bool]:
    """Returns (reading, flagged); flagged is True when the fallback was used."""
    try:
        return probe(), False
    except ProbeUnavailable:
        return fallback, True
