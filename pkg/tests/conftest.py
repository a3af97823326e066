from __future__ import annotations

import pytest

from edgetune.config_space import Configuration, DeviceSpec, ParameterAxis, builtin_spec
from edgetune.device import ProfileRecord, TableBackend

# Throughput/power/cpu-frequency samples for a five-sample window; the
# expected dependence weights for cpu_freq are 0.94 (throughput) and 0.99 (power).
WINDOW_FPS = [15.2, 16.1, 15.8, 14.9, 15.5]
WINDOW_MW = [9800, 10100, 10050, 9500, 9750]
WINDOW_CPU = [1200, 1400, 1400, 1000, 1200]


@pytest.fixture(scope="session")
def xavier() -> DeviceSpec:
    return builtin_spec("xavier-nx")


@pytest.fixture(scope="session")
def orin() -> DeviceSpec:
    return builtin_spec("orin-nano")


def cfg(cpu_freq=1190, cpu_cores=2, gpu_freq=510, mem_freq=1500, concurrency=1) -> Configuration:
    return Configuration(cpu_freq, cpu_cores, gpu_freq, mem_freq, concurrency)


def table(rows, device_name="toy") -> TableBackend:
    """rows: iterable of (config, fps, mw) or (config, None, None) for an invalid entry."""
    records = [ProfileRecord(c, f, p, f is not None) for c, f, p in rows]
    return TableBackend(records, device_name=device_name)


def toy_spec() -> DeviceSpec:
    axes = {
        "cpu_freq": ParameterAxis("cpu_freq", (1000, 1200, 1400)),
        "cpu_cores": ParameterAxis("cpu_cores", (2, 4)),
        "gpu_freq": ParameterAxis("gpu_freq", (500, 700)),
        "mem_freq": ParameterAxis("mem_freq", (1600,)),
        "concurrency": ParameterAxis("concurrency", (1, 2)),
    }
    return DeviceSpec("toy", axes)


ACCEPTANCE: dict[int, str] = {}


def report_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
