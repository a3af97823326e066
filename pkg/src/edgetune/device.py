"""Device backends: map a configuration to measured throughput and power.

Three backends share one contract:

* ``TableBackend`` replays a profile table (the CSV written by ``dump_profile``).
* ``SyntheticBackend`` evaluates a closed-form non-linear response surface.
* ``JetsonAdapterBackend`` documents the real-device contract but is a stub.
"""
from __future__ import annotations

import csv
import io
import math
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import yaml

from .config_space import (
    DIMENSIONS,
    ENUMERATION_ORDER,
    Configuration,
    DeviceSpec,
    ParameterAxis,
    iter_grid,
    validate,
)

PROFILE_HEADER = (
    "device",
    "cpu_cores",
    "cpu_freq_mhz",
    "gpu_freq_mhz",
    "mem_freq_mhz",
    "concurrency",
    "throughput_fps",
    "power_mw",
    "valid",
)
_CSV_FIELD = {
    "cpu_cores": "cpu_cores",
    "cpu_freq": "cpu_freq_mhz",
    "gpu_freq": "gpu_freq_mhz",
    "mem_freq": "mem_freq_mhz",
    "concurrency": "concurrency",
}


class InfeasibleHardware(RuntimeError):
    """The configuration could not run (out of memory, runtime error)."""

    def __init__(self, config: Configuration, reason: str = "hardware failure") -> None:
        super().__init__(f"{config}: {reason}")
        self.config = config
        self.reason = reason


class MissingProfileEntry(LookupError):
    """A table backend was asked for a configuration it has no row for."""


class ProfileFormatError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class MeasurementProtocol:
    """Warm-up seconds are discarded, then one reading per second is averaged."""

    warmup_s: int = 2
    readings: int = 3
    realtime: bool = False

    def __post_init__(self) -> None:
        if self.warmup_s < 0:
            raise ValueError("warmup_s must be >= 0")
        if self.readings < 1:
            raise ValueError("readings must be >= 1")


DEFAULT_PROTOCOL = MeasurementProtocol()


@dataclass(frozen=True)
class MeasurementSample:
    config: Configuration
    throughput: float
    power: float
    sample_count: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.throughput) and self.throughput >= 0):
            raise ValueError(f"throughput must be finite and >= 0, got {self.throughput}")
        if not (math.isfinite(self.power) and self.power > 0):
            raise ValueError(f"power must be finite and > 0, got {self.power}")

    @property
    def efficiency(self) -> float:
        return self.throughput / self.power

    def to_dict(self) -> dict:
        return {
            "throughput_fps": self.throughput,
            "power_mw": self.power,
            "sample_count": self.sample_count,
        }


@dataclass(frozen=True)
class ProfileRecord:
    config: Configuration
    throughput: float | None
    power: float | None
    valid: bool

    def __post_init__(self) -> None:
        if self.valid and (self.throughput is None or self.power is None):
            raise ValueError("valid records need throughput and power")
        if not self.valid and (self.throughput is not None or self.power is not None):
            raise ValueError("invalid records carry no metrics")


class DeviceBackend(ABC):
    """Common measurement flow; subclasses supply per-second readings."""

    spec: DeviceSpec
    #: safe to call ``measure`` from several threads at once
    reentrant: bool = False

    @property
    def enumerable(self) -> bool:
        """Whether every grid point can be scored offline without noise."""
        return False

    def measure(
        self, config: Configuration, protocol: MeasurementProtocol = DEFAULT_PROTOCOL
    ) -> MeasurementSample:
        problems = validate(config, self.spec)
        if problems:
            raise ValueError(f"configuration outside {self.spec.device_name}: {'; '.join(problems)}")
        total = protocol.warmup_s + protocol.readings
        readings = self._readings(config, total)
        if protocol.realtime:
            time.sleep(total)
        kept = readings[protocol.warmup_s :]
        throughput = float(np.mean([r[0] for r in kept]))
        power = float(np.mean([r[1] for r in kept]))
        return MeasurementSample(config, max(throughput, 0.0), power, len(kept))

    @abstractmethod
    def _readings(self, config: Configuration, count: int) -> list[tuple[float, float]]:
        """Return ``count`` consecutive one-second (fps, mW) readings."""


class TableBackend(DeviceBackend):
    """Replays measured metrics from a profile table. Never interpolates."""

    reentrant = True

    def __init__(
        self,
        records: Iterable[ProfileRecord],
        spec: DeviceSpec | None = None,
        device_name: str | None = None,
    ) -> None:
        table: dict[Configuration, ProfileRecord] = {}
        for rec in records:
            if rec.config in table:
                raise ValueError(f"duplicate configuration {rec.config}")
            table[rec.config] = rec
        if not table:
            raise ValueError("profile table is empty")
        self.records = dict(sorted(table.items(), key=lambda kv: kv[0].sort_key()))
        if spec is None:
            spec = spec_from_records(self.records, device_name or "profile")
        self.spec = spec
        self.device_name = device_name or spec.device_name

    @property
    def enumerable(self) -> bool:
        return True

    def lookup(self, config: Configuration) -> ProfileRecord:
        try:
            return self.records[config]
        except KeyError:
            raise MissingProfileEntry(f"no profile row for {config}") from None

    def _readings(self, config: Configuration, count: int) -> list[tuple[float, float]]:
        rec = self.lookup(config)
        if not rec.valid:
            raise InfeasibleHardware(config, "marked invalid in profile")
        return [(rec.throughput, rec.power)] * count  # type: ignore[list-item]

    def __len__(self) -> int:
        return len(self.records)


def spec_from_records(records: Iterable[Configuration] | Mapping, device_name: str) -> DeviceSpec:
    """Smallest spec whose axes cover every configuration in a table."""
    configs = list(records)
    axes = {
        d: ParameterAxis(d, tuple(sorted({getattr(c, d) for c in configs}))) for d in DIMENSIONS
    }
    return DeviceSpec(device_name, axes)


# ---------------------------------------------------------------------------
# synthetic response surface


@dataclass(frozen=True)
class SyntheticSurfaceParams:
    """Coefficients for the closed-form response surface.

    Power coefficients are in mW at the top of each axis. The defaults give a
    Xavier-NX-like spread of roughly 9-36 fps over 4.4-9 W.
    """

    peak_throughput: float = 36.0
    idle_power: float = 2700.0
    cpu_power_coeff: float = 3200.0
    gpu_power_coeff: float = 1800.0
    mem_power_coeff: float = 800.0
    concurrency_power_coeff: float = 500.0
    bottleneck_ratio: float = 3.0
    concurrency_saturation: float = 0.6
    mem_throughput_share: float = 0.4
    noise_stddev_fraction: float = 0.0
    seed: int = 0
    fail_max_concurrency_min_mem: bool = True

    def __post_init__(self) -> None:
        for name in (
            "cpu_power_coeff",
            "gpu_power_coeff",
            "mem_power_coeff",
            "concurrency_power_coeff",
            "bottleneck_ratio",
            "concurrency_saturation",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.peak_throughput <= 0 or self.idle_power <= 0:
            raise ValueError("peak_throughput and idle_power must be > 0")
        if not 0.0 <= self.noise_stddev_fraction <= 0.2:
            raise ValueError("noise_stddev_fraction must lie in [0, 0.2]")
        if not 0.0 <= self.mem_throughput_share <= 1.0:
            raise ValueError("mem_throughput_share must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, data: Mapping) -> "SyntheticSurfaceParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown synthetic parameters: {', '.join(unknown)}")
        return cls(**dict(data))

    @classmethod
    def load(cls, path: str | Path) -> "SyntheticSurfaceParams":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls.from_mapping(data)

    def to_dict(self) -> dict:
        return asdict(self)


def _normalized(config: Configuration, spec: DeviceSpec) -> dict[str, float]:
    return {d: getattr(config, d) / spec.axes[d].max for d in DIMENSIONS}


def synthetic_surface(
    params: SyntheticSurfaceParams, config: Configuration, spec: DeviceSpec
) -> tuple[float, float]:
    """Noiseless (fps, mW) for ``config``.

    Every setting is divided by its axis maximum. The GPU can only be fed as
    fast as the CPU side allows (``bottleneck_ratio * cores * cpu_freq``);
    concurrency gains saturate exponentially. Power is strictly increasing in
    every setting with a quadratic GPU term.
    """
    u = _normalized(config, spec)
    cpu_capacity = params.bottleneck_ratio * u["cpu_cores"] * u["cpu_freq"]
    compute = min(u["gpu_freq"], cpu_capacity)
    mem_factor = 1.0 - params.mem_throughput_share * (1.0 - u["mem_freq"])
    k = params.concurrency_saturation
    c_max = spec.axes["concurrency"].max
    if k > 0:
        conc_factor = (1.0 - math.exp(-k * config.concurrency)) / (1.0 - math.exp(-k * c_max))
    else:
        conc_factor = 1.0
    throughput = params.peak_throughput * compute * mem_factor * conc_factor

    power = (
        params.idle_power
        + params.cpu_power_coeff * u["cpu_cores"] * u["cpu_freq"] ** 2
        + params.gpu_power_coeff * u["gpu_freq"] ** 2
        + params.mem_power_coeff * u["mem_freq"]
        + params.concurrency_power_coeff * u["concurrency"]
    )
    return throughput, power


class SyntheticBackend(DeviceBackend):
    """Closed-form surface with optional seeded multiplicative noise.

    Noise for the k-th measurement of a configuration is drawn from a
    generator keyed on (seed, configuration, k), so runs replay exactly.
    The per-configuration counter makes a noisy backend non-reentrant.
    """

    def __init__(self, spec: DeviceSpec, params: SyntheticSurfaceParams | None = None) -> None:
        self.spec = spec
        self.params = params or SyntheticSurfaceParams()
        self._calls: dict[Configuration, int] = {}
        self.reentrant = self.params.noise_stddev_fraction == 0.0

    @property
    def enumerable(self) -> bool:
        return self.params.noise_stddev_fraction == 0.0

    def fails(self, config: Configuration) -> bool:
        if not self.params.fail_max_concurrency_min_mem:
            return False
        return (
            config.concurrency == self.spec.axes["concurrency"].max
            and config.mem_freq == self.spec.axes["mem_freq"].min
        )

    def core(self, config: Configuration) -> tuple[float, float]:
        return synthetic_surface(self.params, config, self.spec)

    def _readings(self, config: Configuration, count: int) -> list[tuple[float, float]]:
        if self.fails(config):
            raise InfeasibleHardware(config, "out of memory at this concurrency")
        throughput, power = self.core(config)
        sigma = self.params.noise_stddev_fraction
        if sigma == 0.0:
            return [(throughput, power)] * count
        k = self._calls.get(config, 0)
        self._calls[config] = k + 1
        rng = np.random.default_rng([self.params.seed, k, *config.as_tuple()])
        scale = 1.0 + sigma * rng.standard_normal((count, 2))
        return [(throughput * a, max(power * b, 1e-9)) for a, b in scale]


class JetsonAdapterBackend(DeviceBackend):
    """Contract for a physical Jetson board.

    A concrete adapter would apply the configuration (nvpmodel and the cpufreq
    and devfreq sysfs nodes, CPU hotplug for core count), restart the
    inference workload with the requested number of instances, and read
    tegrastats power rails once per second in step with the frame counter.
    Only the contract is provided here.
    """

    def __init__(self, spec: DeviceSpec) -> None:
        self.spec = spec

    def _readings(self, config: Configuration, count: int) -> list[tuple[float, float]]:
        raise NotImplementedError("hardware control is not implemented; use a table or synthetic backend")


# ---------------------------------------------------------------------------
# profile CSV


def _fmt(x: float) -> str:
    text = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def profile_records(
    backend: DeviceBackend, protocol: MeasurementProtocol = DEFAULT_PROTOCOL
) -> list[ProfileRecord]:
    """Measure every grid configuration; failures become invalid records."""
    records = []
    for config in iter_grid(backend.spec):
        try:
            sample = backend.measure(config, protocol)
        except InfeasibleHardware:
            records.append(ProfileRecord(config, None, None, False))
        else:
            records.append(ProfileRecord(config, sample.throughput, sample.power, True))
    return records


def profile_backend(
    backend: DeviceBackend, protocol: MeasurementProtocol = DEFAULT_PROTOCOL
) -> TableBackend:
    if isinstance(backend, TableBackend):
        return backend
    return TableBackend(profile_records(backend, protocol), spec=backend.spec)


def render_profile(table: TableBackend) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROFILE_HEADER)
    for config, rec in table.records.items():
        row = [table.device_name] + [str(getattr(config, d)) for d in ENUMERATION_ORDER]
        if rec.valid:
            row += [_fmt(rec.throughput), _fmt(rec.power), "1"]  # type: ignore[arg-type]
        else:
            row += ["", "", "0"]
        writer.writerow(row)
    return buf.getvalue()


def dump_profile(
    source: DeviceBackend,
    path: str | Path,
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TableBackend:
    """Write a profile CSV, measuring the whole grid first if needed."""
    table = profile_backend(source, protocol)
    Path(path).write_text(render_profile(table), encoding="utf-8")
    return table


def _parse_metric(text: str, name: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ProfileFormatError(line, f"{name} is not numeric: {text!r}") from None
    if not math.isfinite(value):
        raise ProfileFormatError(line, f"{name} is not finite: {text!r}")
    return value


def parse_profile(text: str, spec: DeviceSpec | None = None) -> TableBackend:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ProfileFormatError(1, "empty file") from None
    if tuple(header) != PROFILE_HEADER:
        raise ProfileFormatError(1, f"unexpected header {header}")

    records: list[ProfileRecord] = []
    seen: dict[Configuration, int] = {}
    device = None
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(PROFILE_HEADER):
            raise ProfileFormatError(line, f"expected {len(PROFILE_HEADER)} columns, got {len(row)}")
        cells = dict(zip(PROFILE_HEADER, row))
        if device is None:
            device = cells["device"]
        elif cells["device"] != device:
            raise ProfileFormatError(line, f"device {cells['device']!r} differs from {device!r}")
        try:
            config = Configuration(**{d: int(cells[_CSV_FIELD[d]]) for d in DIMENSIONS})
        except ValueError as exc:
            raise ProfileFormatError(line, f"bad configuration value ({exc})") from None
        if config in seen:
            raise ProfileFormatError(line, f"duplicate configuration (first on line {seen[config]})")
        seen[config] = line
        if cells["valid"] == "1":
            fps = _parse_metric(cells["throughput_fps"], "throughput_fps", line)
            mw = _parse_metric(cells["power_mw"], "power_mw", line)
            if fps < 0 or mw <= 0:
                raise ProfileFormatError(line, "throughput must be >= 0 and power > 0")
            records.append(ProfileRecord(config, fps, mw, True))
        elif cells["valid"] == "0":
            if cells["throughput_fps"] or cells["power_mw"]:
                raise ProfileFormatError(line, "invalid rows must leave metrics empty")
            records.append(ProfileRecord(config, None, None, False))
        else:
            raise ProfileFormatError(line, f"valid must be 0 or 1, got {cells['valid']!r}")
    if not records:
        raise ProfileFormatError(reader.line_num, "profile has no data rows")
    if spec is not None:
        for rec in records:
            problems = validate(rec.config, spec)
            if problems:
                raise ProfileFormatError(seen[rec.config], "; ".join(problems))
    return TableBackend(records, spec=spec, device_name=device)


def load_profile(path: str | Path, spec: DeviceSpec | None = None) -> TableBackend:
    return parse_profile(Path(path).read_text(encoding="utf-8"), spec)
