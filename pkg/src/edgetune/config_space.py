"""Discrete hardware configuration space: axes, device specs, grids, snapping."""
from __future__ import annotations

import bisect
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import yaml

# Order of the setting tuple used by the search and by correlation weights.
DIMENSIONS = ("cpu_freq", "cpu_cores", "gpu_freq", "mem_freq", "concurrency")
# Order used for grid enumeration, profile rows and lexicographic sorting.
ENUMERATION_ORDER = ("cpu_cores", "cpu_freq", "gpu_freq", "mem_freq", "concurrency")

BUILTIN_SPECS = {"xavier-nx": "xavier_nx.yaml", "orin-nano": "orin_nano.yaml"}


class SpecError(ValueError):
    """Raised for malformed device spec definitions."""


@dataclass(frozen=True, order=False)
class Configuration:
    cpu_freq: int
    cpu_cores: int
    gpu_freq: int
    mem_freq: int
    concurrency: int

    def as_tuple(self) -> tuple[int, ...]:
        """Values in search-dimension order."""
        return tuple(getattr(self, d) for d in DIMENSIONS)

    def sort_key(self) -> tuple[int, ...]:
        return tuple(getattr(self, d) for d in ENUMERATION_ORDER)

    def replace(self, **changes: int) -> "Configuration":
        values = asdict(self)
        values.update(changes)
        return Configuration(**values)

    def to_dict(self) -> dict[str, int]:
        return {d: getattr(self, d) for d in ENUMERATION_ORDER}

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "Configuration":
        missing = [d for d in DIMENSIONS if d not in data]
        if missing:
            raise SpecError(f"configuration missing fields: {', '.join(missing)}")
        return cls(**{d: int(data[d]) for d in DIMENSIONS})  # type: ignore[arg-type]

    def __str__(self) -> str:
        return "(" + ", ".join(f"{d}={getattr(self, d)}" for d in ENUMERATION_ORDER) + ")"


@dataclass(frozen=True)
class ParameterAxis:
    name: str
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.name not in DIMENSIONS:
            raise SpecError(f"unknown axis {self.name!r}")
        if not self.values:
            raise SpecError(f"axis {self.name} has no values")
        for v in self.values:
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise SpecError(f"axis {self.name}: values must be positive integers, got {v!r}")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise SpecError(f"axis {self.name}: values must be strictly ascending")

    @classmethod
    def from_range(cls, name: str, lo: int, hi: int, step: int) -> "ParameterAxis":
        if step <= 0:
            raise SpecError(f"axis {name}: step must be positive")
        return cls(name, tuple(range(lo, hi + 1, step)))

    @property
    def min(self) -> int:
        return self.values[0]

    @property
    def max(self) -> int:
        return self.values[-1]

    def __len__(self) -> int:
        return len(self.values)

    def index(self, value: int) -> int:
        return self.values.index(value)


def snap(value: float, axis: ParameterAxis) -> int:
    """Nearest allowed value on ``axis``; exact midpoints go to the lower value."""
    vals = axis.values
    if value <= vals[0]:
        return vals[0]
    if value >= vals[-1]:
        return vals[-1]
    hi = bisect.bisect_left(vals, value)
    lower, upper = vals[hi - 1], vals[hi]
    if upper == value:
        return upper
    return lower if value - lower <= upper - value else upper


@dataclass(frozen=True)
class DeviceSpec:
    device_name: str
    axes: Mapping[str, ParameterAxis]
    presets: Mapping[str, Configuration] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = set(self.axes)
        if names != set(DIMENSIONS):
            missing = sorted(set(DIMENSIONS) - names)
            extra = sorted(names - set(DIMENSIONS))
            raise SpecError(f"spec {self.device_name}: missing axes {missing}, unknown axes {extra}")
        for name, axis in self.axes.items():
            if axis.name != name:
                raise SpecError(f"axis keyed {name!r} is named {axis.name!r}")
        for preset, config in self.presets.items():
            problems = validate(config, self)
            if problems:
                raise SpecError(f"preset {preset!r}: {'; '.join(problems)}")

    def axis(self, name: str) -> ParameterAxis:
        return self.axes[name]

    @property
    def grid_size(self) -> int:
        size = 1
        for axis in self.axes.values():
            size *= len(axis)
        return size

    def max_config(self) -> Configuration:
        return Configuration(**{d: self.axes[d].max for d in DIMENSIONS})

    def min_config(self) -> Configuration:
        return Configuration(**{d: self.axes[d].min for d in DIMENSIONS})

    def mid_config(self) -> Configuration:
        """Median allowed value per axis, lower median for even cardinality."""
        return Configuration(
            **{d: self.axes[d].values[(len(self.axes[d]) - 1) // 2] for d in DIMENSIONS}
        )

    def preset(self, name: str) -> Configuration:
        if name == "max_power":
            return self.max_config()
        if name in self.presets:
            return self.presets[name]
        if name == "default":
            return self.mid_config()
        raise KeyError(f"spec {self.device_name} has no preset {name!r}")

    def to_dict(self) -> dict:
        return {
            "device_name": self.device_name,
            "axes": {d: list(self.axes[d].values) for d in ENUMERATION_ORDER},
            "presets": {k: v.to_dict() for k, v in sorted(self.presets.items())},
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


def enumerate_grid(spec: DeviceSpec) -> list[Configuration]:
    """Every configuration in the Cartesian product, in lexicographic order."""
    return list(iter_grid(spec))


def iter_grid(spec: DeviceSpec) -> Iterator[Configuration]:
    value_lists = [spec.axes[d].values for d in ENUMERATION_ORDER]
    for combo in itertools.product(*value_lists):
        yield Configuration(**dict(zip(ENUMERATION_ORDER, combo)))


def config_at(spec: DeviceSpec, index: int) -> Configuration:
    """The ``index``-th configuration of ``enumerate_grid(spec)`` without building the grid."""
    if not 0 <= index < spec.grid_size:
        raise IndexError(f"grid index {index} out of range for {spec.grid_size} configurations")
    values = {}
    for name in reversed(ENUMERATION_ORDER):
        axis = spec.axes[name]
        index, pos = divmod(index, len(axis))
        values[name] = axis.values[pos]
    return Configuration(**values)


def validate(config: Configuration, spec: DeviceSpec) -> list[str]:
    """Return one message per field outside its axis; an empty list means valid."""
    problems = []
    for f in fields(Configuration):
        value = getattr(config, f.name)
        if value not in spec.axes[f.name].values:
            problems.append(f"{f.name}={value} not in {list(spec.axes[f.name].values)}")
    return problems


class ProhibitedSet:
    """Configurations proven infeasible during one tuning run. Only grows."""

    def __init__(self, entries: Iterable[Configuration] = ()) -> None:
        self._entries: set[Configuration] = set(entries)

    def add(self, config: Configuration) -> None:
        self._entries.add(config)

    def __contains__(self, config: object) -> bool:
        return config in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[Configuration]:
        return iter(sorted(self._entries, key=Configuration.sort_key))

    def copy(self) -> "ProhibitedSet":
        return ProhibitedSet(self._entries)


def prohibited_contains(ps: ProhibitedSet, config: Configuration) -> bool:
    return config in ps


def prohibited_add(ps: ProhibitedSet, config: Configuration) -> None:
    ps.add(config)


# ---------------------------------------------------------------------------
# spec files


def _parse_axis(name: str, raw: object) -> ParameterAxis:
    if isinstance(raw, list):
        return ParameterAxis(name, tuple(int(v) for v in raw))
    if isinstance(raw, Mapping):
        if "values" in raw:
            return ParameterAxis(name, tuple(int(v) for v in raw["values"]))
        try:
            lo, hi, step = int(raw["min"]), int(raw["max"]), int(raw["step"])
        except KeyError as exc:
            raise SpecError(f"axis {name}: range form needs min, max and step (missing {exc})") from None
        return ParameterAxis.from_range(name, lo, hi, step)
    raise SpecError(f"axis {name}: expected a list or a mapping, got {type(raw).__name__}")


def spec_from_dict(data: Mapping) -> DeviceSpec:
    if not isinstance(data, Mapping):
        raise SpecError("spec file must contain a mapping")
    if "device_name" not in data or "axes" not in data:
        raise SpecError("spec needs 'device_name' and 'axes'")
    axes_raw = data["axes"]
    if not isinstance(axes_raw, Mapping):
        raise SpecError("'axes' must be a mapping")
    axes = {name: _parse_axis(name, raw) for name, raw in axes_raw.items()}
    presets = {
        name: Configuration.from_mapping(cfg) for name, cfg in (data.get("presets") or {}).items()
    }
    return DeviceSpec(str(data["device_name"]), axes, presets)


def load_spec(path_or_name: str | Path) -> DeviceSpec:
    """Load a spec file, or one of the built-in specs by name."""
    key = str(path_or_name)
    if key in BUILTIN_SPECS:
        text = resources.files("edgetune.specs").joinpath(BUILTIN_SPECS[key]).read_text("utf-8")
    else:
        text = Path(path_or_name).read_text(encoding="utf-8")
    return spec_from_dict(yaml.safe_load(text))


def builtin_spec(name: str) -> DeviceSpec:
    if name not in BUILTIN_SPECS:
        raise KeyError(f"no built-in spec {name!r}; choose from {sorted(BUILTIN_SPECS)}")
    return load_spec(name)


def dump_spec(spec: DeviceSpec, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False), encoding="utf-8")
