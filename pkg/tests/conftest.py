import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latsel.dataset import SampleRecord  # noqa: E402
from latsel.kernels import FakeClock  # noqa: E402
from latsel.probe import DeviceProbe, FakeProbe  # noqa: E402


@pytest.fixture
def fake_probe():
    return FakeProbe(8 * 2**30, 0.25)


@pytest.fixture
def fake_clock():
    return FakeClock([1.0, 3.0, 2.0, 5.0, 4.0])


@pytest.fixture(autouse=True)
def _fake_probe_env(monkeypatch):
    monkeypatch.setenv("LATSEL_PROBE", "fake:8589934592:0.25")


def make_record(kind, cfg, latency, mem=8 * 2**30, util=0.25):
    from latsel.params import compute_inferables

    return SampleRecord(kind, cfg, DeviceProbe(mem, util), compute_inferables(kind, cfg), latency)
