"""Comparison methods scored on the same reward scale as the tuner."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .config_space import Configuration, DeviceSpec, ProhibitedSet, config_at, enumerate_grid, validate
from .device import (
    DEFAULT_PROTOCOL,
    DeviceBackend,
    InfeasibleHardware,
    MeasurementProtocol,
    TableBackend,
)
from .optimizer import Leader, ScenarioConstraints, TraceEntry, TuningResult, reward

PRESET_MODES = ("max_power", "default")


class NotEnumerable(ValueError):
    """Exhaustive search was requested on a backend that cannot be enumerated."""


@dataclass(frozen=True)
class PresetMode:
    name: str
    config: Configuration

    @classmethod
    def from_spec(cls, spec: DeviceSpec, name: str) -> "PresetMode":
        if name not in PRESET_MODES:
            raise ValueError(f"unknown preset {name!r}; choose from {PRESET_MODES}")
        return cls(name, spec.preset(name))


def _pick(leaders: Iterable[Leader]) -> Leader:
    """Highest reward; ties go to the lexicographically smaller configuration."""
    best = None
    for leader in leaders:
        if best is None or leader.reward > best.reward or (
            leader.reward == best.reward and leader.config.sort_key() < best.config.sort_key()
        ):
            best = leader
    if best is None:
        raise ValueError("nothing was evaluated")
    return best


def oracle_search(
    backend: DeviceBackend,
    constraints: ScenarioConstraints,
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TuningResult:
    """Score every valid configuration and return the best one."""
    if not backend.enumerable:
        raise NotEnumerable("oracle search needs a table backend or a noiseless synthetic backend")
    if isinstance(backend, TableBackend):
        configs = list(backend.records)
    else:
        configs = enumerate_grid(backend.spec)
    if not configs:
        raise ValueError("empty profile")

    scratch = ProhibitedSet()
    leaders = []
    for config in configs:
        try:
            sample = backend.measure(config, protocol)
        except InfeasibleHardware:
            continue
        leaders.append(Leader(config, sample, reward(sample, constraints, scratch)))
    if not leaders:
        raise ValueError("profile has no valid configurations")
    return TuningResult.from_leader("oracle", _pick(leaders), constraints, len(leaders))


def oracle_linear_scan(backend: TableBackend, constraints: ScenarioConstraints) -> tuple[Configuration, float]:
    """Plain argmax over profile rows; kept separate from ``oracle_search`` as a cross-check."""
    best_cfg, best_score = None, -float("inf")
    for config, rec in sorted(backend.records.items(), key=lambda kv: kv[0].sort_key()):
        if not rec.valid:
            continue
        ok = rec.throughput >= constraints.throughput_target and rec.power <= constraints.power_budget
        score = rec.throughput / rec.power if ok else -rec.power / max(rec.throughput, 1e-6)
        if score > best_score:
            best_cfg, best_score = config, score
    if best_cfg is None:
        raise ValueError("profile has no valid configurations")
    return best_cfg, best_score


def random_search(
    backend: DeviceBackend,
    constraints: ScenarioConstraints,
    trials: int = 10,
    seed: int = 0,
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TuningResult:
    """Budget-matched uniform random trials without replacement."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    size = backend.spec.grid_size
    rng = np.random.default_rng(seed)
    picks = rng.permutation(size)[: min(trials, size)]

    prohibited = ProhibitedSet()
    leaders, trace = [], []
    worst = None
    for it, idx in enumerate(picks, start=1):
        config = config_at(backend.spec, int(idx))
        failure = None
        try:
            sample = backend.measure(config, protocol)
        except InfeasibleHardware as exc:
            sample, failure = None, exc.reason
            prohibited.add(config)
            score = -1e12 if worst is None else min(worst, 0.0) - 1.0
        else:
            score = reward(sample, constraints, prohibited)
        worst = score if worst is None else min(worst, score)
        leaders.append(Leader(config, sample, score))
        trace.append(
            TraceEntry(
                iteration=it,
                config=config,
                sample=sample,
                reward=score,
                failure=failure,
                source="random",
                best_reward=_pick(leaders).reward,
                prohibited=len(prohibited),
            )
        )
    return TuningResult.from_leader(f"random{trials}", _pick(leaders), constraints, len(picks), trace)


def preset_eval(
    backend: DeviceBackend,
    mode: PresetMode,
    constraints: ScenarioConstraints,
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TuningResult:
    """Measure a fixed preset once. Hardware failures propagate."""
    problems = validate(mode.config, backend.spec)
    if problems:
        raise ValueError(f"preset {mode.name} invalid: {'; '.join(problems)}")
    sample = backend.measure(mode.config, protocol)
    score = reward(sample, constraints, ProhibitedSet())
    return TuningResult.from_leader(mode.name, Leader(mode.config, sample, score), constraints, 1)
