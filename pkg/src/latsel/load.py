"""Background inference jobs that perturb the device during measurement."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import AlreadyRunning, InvalidConfig
from .kinds import ALL_KINDS, ModuleKind
from .params import SMALL_RANGES, SamplingConfig, SamplingRanges, draw_config


@dataclass(frozen=True)
class LoadProfile:
    enabled: bool = False
    mean_interarrival_ms: float = 50.0
    job_kind_pool: tuple[ModuleKind, ...] = ALL_KINDS
    seed: int = 0
    workers: int = 1
    ranges: SamplingRanges = field(default=SMALL_RANGES, compare=False)

    def __post_init__(self):
        if self.enabled:
            if self.mean_interarrival_ms <= 0:
                raise InvalidConfig("mean_interarrival_ms must be positive")
            if not self.job_kind_pool:
                raise InvalidConfig("job_kind_pool is empty")
            if self.workers < 1:
                raise InvalidConfig("need at least one worker")

    def to_dict(self) -> dict:
        return {
            "enabled": self.enabled,
            "mean_interarrival_ms": self.mean_interarrival_ms,
            "job_kind_pool": [k.value for k in self.job_kind_pool],
            "seed": self.seed,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class Job:
    delay_ms: float
    kind: ModuleKind
    cfg: SamplingConfig
    seed: int


def job_stream(profile: LoadProfile, worker: int = 0) -> Iterator[Job]:
    """Endless, seed-deterministic job sequence for one worker."""
    rng = np.random.default_rng([profile.seed, worker])
    pool = profile.job_kind_pool
    while True:
        delay = float(rng.exponential(profile.mean_interarrival_ms))
        kind = pool[int(rng.integers(len(pool)))]
        cfg = draw_config(kind, rng, profile.ranges)
        yield Job(delay, kind, cfg, int(rng.integers(2**31)))


def planned_jobs(profile: LoadProfile, count: int, worker: int = 0) -> list[Job]:
    it = job_stream(profile, worker)
    return [next(it) for _ in range(count)]


_active_lock = threading.Lock()
_active: "LoadHandle | None" = None


class LoadHandle:
    def __init__(self, profile: LoadProfile):
        self.profile = profile
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._count_lock = threading.Lock()
        self.jobs_run = 0
        self.errors: list[BaseException] = []

    @property
    def running(self) -> bool:
        return any(t.is_alive() for t in self._threads)

    def _work(self, worker: int) -> None:
        from .kernels import build_module, forward, make_input

        for job in job_stream(self.profile, worker):
            if self._stop.wait(job.delay_ms / 1e3):
                return
            try:
                mod = build_module(job.kind, job.cfg, seed=job.seed)
                forward(mod, make_input(mod, seed=job.seed))
            except Exception as e:  # keep loading; surface on stop
                self.errors.append(e)
            with self._count_lock:
                self.jobs_run += 1

    def _start(self) -> None:
        for w in range(self.profile.workers):
            t = threading.Thread(target=self._work, args=(w,), name=f"latsel-load-{w}", daemon=True)
            self._threads.append(t)
            t.start()

    def stop(self) -> None:
        global _active
        self._stop.set()
        for t in self._threads:
            t.join()
        with _active_lock:
            if _active is self:
                _active = None

    def __enter__(self) -> "LoadHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def start_load_generator(profile: LoadProfile) -> LoadHandle:
    """Start background workers; a disabled profile returns an idle handle.

    Only one generator may run per process.
    """
    global _active
    handle = LoadHandle(profile)
    if not profile.enabled:
        return handle
    with _active_lock:
        if _active is not None:
            raise AlreadyRunning("a load generator is already running")
        _active = handle
    handle._start()
    return handle


def stop_load_generator(handle: LoadHandle) -> None:
    handle.stop()
