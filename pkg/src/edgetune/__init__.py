"""Constrained throughput/power tuning of edge-inference hardware settings."""

from .config_space import Configuration, DeviceSpec, ParameterAxis, ProhibitedSet, builtin_spec, load_spec
from .device import (
    InfeasibleHardware,
    MeasurementProtocol,
    MeasurementSample,
    SyntheticBackend,
    SyntheticSurfaceParams,
    TableBackend,
    load_profile,
)
from .optimizer import ScenarioConstraints, TuningResult, run

__all__ = [
    "Configuration",
    "DeviceSpec",
    "InfeasibleHardware",
    "MeasurementProtocol",
    "MeasurementSample",
    "ParameterAxis",
    "ProhibitedSet",
    "ScenarioConstraints",
    "SyntheticBackend",
    "SyntheticSurfaceParams",
    "TableBackend",
    "TuningResult",
    "builtin_spec",
    "load_profile",
    "load_spec",
    "run",
]
__version__ = "0.1.0"
