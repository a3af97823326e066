"""Correlation-guided constrained configuration search.

Each iteration measures one configuration, scores it, refreshes the
per-dimension dependence weights over a sliding window of recent samples,
and steps away from the best/second-best pair by an amount proportional to
their spread and to how strongly each setting drives throughput or power.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .config_space import (
    DIMENSIONS,
    Configuration,
    DeviceSpec,
    ProhibitedSet,
    enumerate_grid,
    snap,
    validate,
)
from .dcov import correlation_weights as _correlation_weights
from .device import (
    DEFAULT_PROTOCOL,
    DeviceBackend,
    InfeasibleHardware,
    MeasurementProtocol,
    MeasurementSample,
)

log = logging.getLogger(__name__)

ZERO_THROUGHPUT_GUARD = 1e-6  # fps
# Penalty for a hardware failure when no other penalty has been seen yet.
FAILURE_FLOOR = -1e12
HEURISTICS = ("cores", "freq", "both", "none")


@dataclass(frozen=True)
class ScenarioConstraints:
    throughput_target: float
    power_budget: float
    power_floor: float = 0.0
    window_size: int = 5
    iteration_budget: int = 10

    def __post_init__(self) -> None:
        if not self.throughput_target > 0:
            raise ValueError("throughput_target must be > 0")
        if not self.power_budget > self.power_floor >= 0:
            raise ValueError("need power_budget > power_floor >= 0")
        if self.window_size < 2:
            raise ValueError("window_size must be >= 2")
        if self.iteration_budget < 1:
            raise ValueError("iteration_budget must be >= 1")

    def feasible(self, sample: MeasurementSample | None) -> bool:
        if sample is None:
            return False
        return sample.throughput >= self.throughput_target and sample.power <= self.power_budget

    def to_dict(self) -> dict:
        return {
            "throughput_target_fps": self.throughput_target,
            "power_budget_mw": self.power_budget,
            "power_floor_mw": self.power_floor,
            "window_size": self.window_size,
            "iteration_budget": self.iteration_budget,
        }


def reward(
    sample: MeasurementSample, constraints: ScenarioConstraints, prohibited: ProhibitedSet
) -> float:
    """Efficiency for a feasible sample; otherwise prohibit it and return -power/throughput."""
    tau, p = sample.throughput, sample.power
    if tau < constraints.throughput_target or p > constraints.power_budget:
        prohibited.add(sample.config)
        return -(p / tau) if tau > 0 else -(p / ZERO_THROUGHPUT_GUARD)
    return tau / p


class SampleWindow:
    """FIFO of the most recent measurements."""

    def __init__(self, size: int, samples: Iterable[MeasurementSample] = ()) -> None:
        if size < 1:
            raise ValueError("window size must be >= 1")
        self.size = size
        self._samples: deque[MeasurementSample] = deque(samples, maxlen=size)

    def append(self, sample: MeasurementSample) -> None:
        self._samples.append(sample)

    @property
    def samples(self) -> list[MeasurementSample]:
        return list(self._samples)

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)


def correlation_weights(window: SampleWindow | Sequence[MeasurementSample]) -> tuple[list[float], list[float]]:
    """(alpha, beta) per search dimension for the samples currently in the window."""
    samples = list(window)
    return _correlation_weights(
        [s.config.as_tuple() for s in samples],
        [s.throughput for s in samples],
        [s.power for s in samples],
    )


@dataclass(frozen=True)
class Leader:
    config: Configuration
    sample: MeasurementSample | None
    reward: float


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    config: Configuration
    sample: MeasurementSample | None
    reward: float
    failure: str | None = None
    source: str = "search"
    aside: bool = False
    alpha: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    gamma: tuple[float, ...] | None = None
    direction: str | None = None
    heuristic: bool = False
    collision_attempts: int = 0
    best_reward: float = float("nan")
    prohibited: int = 0

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "config": self.config.to_dict(),
            "sample": None if self.sample is None else self.sample.to_dict(),
            "failure": self.failure,
            "reward": self.reward,
            "source": self.source,
            "aside": self.aside,
            "alpha": None if self.alpha is None else list(self.alpha),
            "beta": None if self.beta is None else list(self.beta),
            "gamma": None if self.gamma is None else list(self.gamma),
            "direction": self.direction,
            "heuristic": self.heuristic,
            "collision_attempts": self.collision_attempts,
            "best_reward": self.best_reward,
            "prohibited_count": self.prohibited,
        }


@dataclass
class CoralState:
    window: SampleWindow
    prohibited: ProhibitedSet = field(default_factory=ProhibitedSet)
    best: Leader | None = None
    second_best: Leader | None = None
    aside: bool = False
    last_sample: MeasurementSample | None = None
    iteration: int = 0
    evaluated: set[Configuration] = field(default_factory=set)
    trace: list[TraceEntry] = field(default_factory=list)
    worst_reward: float | None = None

    def is_free(self, config: Configuration) -> bool:
        return config not in self.prohibited and config not in self.evaluated


def update_leaders(
    state: CoralState, config: Configuration, sample: MeasurementSample | None, score: float
) -> bool:
    """Keep the two best distinct configurations; return True if the best reward rose."""
    previous = state.best.reward if state.best is not None else None
    entry = Leader(config, sample, score)
    leaders = [l for l in (state.best, state.second_best) if l is not None]
    for i, leader in enumerate(leaders):
        if leader.config == config:
            if score > leader.reward:
                leaders[i] = entry
            break
    else:
        leaders.append(entry)
    # stable sort: on equal rewards the earlier entry stays ahead
    leaders.sort(key=lambda l: -l.reward)
    state.best = leaders[0]
    state.second_best = leaders[1] if len(leaders) > 1 else None
    return previous is None or state.best.reward > previous


@dataclass(frozen=True)
class Proposal:
    config: Configuration
    raw: Configuration
    gamma: tuple[float, ...]
    descend: bool
    heuristic: bool
    collision_attempts: int
    source: str


def _step_values(
    best: Configuration,
    second: Configuration,
    gamma: Sequence[float],
    aside: bool,
    descend: bool,
) -> list[float]:
    """Unsnapped next value per dimension."""
    out = []
    for i, dim in enumerate(DIMENSIONS):
        x, y = getattr(best, dim), getattr(second, dim)
        delta = 0.5 * abs(x - y) * gamma[i]
        low, high = (y, x) if aside else (x, y)
        out.append(low - delta if descend else high + delta)
    return out


def _grid_distance(a: Configuration, b: Configuration, spec: DeviceSpec) -> int:
    return sum(
        abs(spec.axes[d].index(getattr(a, d)) - spec.axes[d].index(getattr(b, d))) for d in DIMENSIONS
    )


def _resolve_collision(
    z: Configuration,
    gamma: Sequence[float],
    descend: bool,
    state: CoralState,
    spec: DeviceSpec,
) -> tuple[Configuration, int, str]:
    """Walk away from an already-seen or prohibited proposal.

    First, single-axis steps along the search direction, trying axes in
    descending weight order at growing distances. If none is fresh, take the
    nearest fresh grid point. With nothing fresh left, repeat the best.
    """
    if state.is_free(z):
        return z, 0, "search"
    order = sorted(range(len(DIMENSIONS)), key=lambda i: -gamma[i])
    sign = -1 if descend else 1
    attempts = 0
    longest = max(len(axis) for axis in spec.axes.values())
    for step in range(1, longest):
        for i in order:
            axis = spec.axes[DIMENSIONS[i]]
            idx = axis.index(getattr(z, DIMENSIONS[i])) + sign * step
            if not 0 <= idx < len(axis):
                continue
            attempts += 1
            candidate = z.replace(**{DIMENSIONS[i]: axis.values[idx]})
            if state.is_free(candidate):
                return candidate, attempts, "collision"

    fresh = [c for c in enumerate_grid(spec) if state.is_free(c)]
    attempts += len(fresh)
    if fresh:
        nearest = min(fresh, key=lambda c: (_grid_distance(c, z, spec), c.sort_key()))
        return nearest, attempts, "nearest"
    assert state.best is not None
    return state.best.config, attempts, "repeat"


def plan_next(
    state: CoralState,
    weights: tuple[Sequence[float], Sequence[float]],
    constraints: ScenarioConstraints,
    spec: DeviceSpec,
    heuristic: str = "cores",
) -> Proposal:
    """Full proposal record; ``propose_next`` returns only its configuration."""
    if state.best is None or state.second_best is None:
        raise ValueError("need both a best and a second-best configuration")
    if heuristic not in HEURISTICS:
        raise ValueError(f"heuristic must be one of {HEURISTICS}")
    alpha, beta = weights
    gamma = tuple(max(a, b) for a, b in zip(alpha, beta))

    last = state.last_sample
    descend = (
        last is not None
        and last.throughput > constraints.throughput_target
        and last.power >= constraints.power_floor
    )
    values = _step_values(state.best.config, state.second_best.config, gamma, state.aside, descend)
    z = Configuration(
        **{d: snap(v, spec.axes[d]) for d, v in zip(DIMENSIONS, values)}
    )

    applied = False
    best_sample = state.best.sample
    if (
        heuristic != "none"
        and best_sample is not None
        and best_sample.power > constraints.power_floor
        and best_sample.throughput > constraints.throughput_target
    ):
        changes = {"concurrency": spec.axes["concurrency"].max}
        if heuristic in ("cores", "both"):
            changes["cpu_cores"] = spec.axes["cpu_cores"].min
        if heuristic in ("freq", "both"):
            changes["cpu_freq"] = spec.axes["cpu_freq"].min
        z = z.replace(**changes)
        applied = True

    chosen, attempts, source = _resolve_collision(z, gamma, descend, state, spec)
    return Proposal(chosen, z, gamma, descend, applied, attempts, source)


def propose_next(
    state: CoralState,
    weights: tuple[Sequence[float], Sequence[float]],
    constraints: ScenarioConstraints,
    spec: DeviceSpec,
    heuristic: str = "cores",
) -> Configuration:
    return plan_next(state, weights, constraints, spec, heuristic).config


@dataclass(frozen=True)
class TuningResult:
    method: str
    best_config: Configuration
    best_sample: MeasurementSample | None
    reward: float
    feasible: bool
    efficiency: float
    iterations_used: int
    trace: tuple[TraceEntry, ...] = ()

    @classmethod
    def from_leader(
        cls,
        method: str,
        leader: Leader,
        constraints: ScenarioConstraints,
        iterations: int,
        trace: Sequence[TraceEntry] = (),
    ) -> "TuningResult":
        sample = leader.sample
        return cls(
            method=method,
            best_config=leader.config,
            best_sample=sample,
            reward=leader.reward,
            feasible=constraints.feasible(sample),
            efficiency=sample.efficiency if sample is not None else 0.0,
            iterations_used=iterations,
            trace=tuple(trace),
        )

    @property
    def throughput(self) -> float:
        return self.best_sample.throughput if self.best_sample else 0.0

    @property
    def power(self) -> float:
        return self.best_sample.power if self.best_sample else float("nan")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "best_config": self.best_config.to_dict(),
            "best_sample": None if self.best_sample is None else self.best_sample.to_dict(),
            "reward": self.reward,
            "feasible": self.feasible,
            "efficiency_fps_per_mw": self.efficiency,
            "iterations_used": self.iterations_used,
            "trace": [t.to_dict() for t in self.trace],
        }


def bootstrap_configs(
    spec: DeviceSpec, init_policy: object, rng: np.random.Generator
) -> list[Configuration]:
    """Configurations evaluated before the search has two leaders.

    ``init_policy`` is "mid_max" (median of every axis, then every axis at
    its maximum), "random" (two distinct seeded draws) or an explicit
    sequence of configurations.
    """
    if init_policy == "mid_max":
        return [spec.mid_config(), spec.max_config()]
    if init_policy == "random":
        grid = enumerate_grid(spec)
        picks = rng.choice(len(grid), size=min(2, len(grid)), replace=False)
        return [grid[int(i)] for i in picks]
    if isinstance(init_policy, (list, tuple)):
        configs = [c if isinstance(c, Configuration) else Configuration.from_mapping(c) for c in init_policy]
        if not configs:
            raise ValueError("explicit init policy needs at least one configuration")
        return configs
    raise ValueError(f"unknown init policy {init_policy!r}")


def _failure_penalty(state: CoralState) -> float:
    """A score strictly below everything seen so far in the run."""
    if state.worst_reward is None:
        return FAILURE_FLOOR
    return min(state.worst_reward, 0.0) - 1.0


def run(
    backend: DeviceBackend,
    constraints: ScenarioConstraints,
    spec: DeviceSpec | None = None,
    init_policy: object = "mid_max",
    seed: int = 0,
    heuristic: str = "cores",
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TuningResult:
    """Tune for exactly ``constraints.iteration_budget`` measurements."""
    spec = spec or backend.spec
    if dict(spec.axes) != dict(backend.spec.axes):
        raise ValueError(f"spec {spec.device_name} does not match the backend's configuration space")
    rng = np.random.default_rng(seed)
    boot = bootstrap_configs(spec, init_policy, rng)
    for config in boot:
        problems = validate(config, spec)
        if problems:
            raise ValueError(f"initial configuration {config} invalid: {'; '.join(problems)}")

    state = CoralState(window=SampleWindow(constraints.window_size))
    for it in range(1, constraints.iteration_budget + 1):
        state.iteration = it
        alpha = beta = gamma = None
        direction = None
        applied = False
        attempts = 0
        if it <= len(boot) and state.is_free(boot[it - 1]):
            config, source = boot[it - 1], "bootstrap"
        elif state.best is not None and state.second_best is not None:
            if len(state.window):
                alpha_l, beta_l = correlation_weights(state.window)
            else:
                alpha_l, beta_l = [1.0] * len(DIMENSIONS), [1.0] * len(DIMENSIONS)
            proposal = plan_next(state, (alpha_l, beta_l), constraints, spec, heuristic)
            config, source = proposal.config, proposal.source
            alpha, beta, gamma = tuple(alpha_l), tuple(beta_l), proposal.gamma
            direction = "down" if proposal.descend else "up"
            applied = proposal.heuristic
            attempts = proposal.collision_attempts
        else:
            fresh = [c for c in enumerate_grid(spec) if state.is_free(c)]
            if fresh:
                config, source = fresh[int(rng.integers(len(fresh)))], "explore"
            else:
                assert state.best is not None
                config, source = state.best.config, "repeat"

        failure = None
        try:
            sample: MeasurementSample | None = backend.measure(config, protocol)
        except InfeasibleHardware as exc:
            sample = None
            failure = exc.reason
            score = _failure_penalty(state)
            state.prohibited.add(config)
        else:
            score = reward(sample, constraints, state.prohibited)
            state.window.append(sample)
            state.last_sample = sample
        state.evaluated.add(config)
        state.worst_reward = score if state.worst_reward is None else min(state.worst_reward, score)

        # the aside flag that shaped this proposal is what gets recorded
        aside_used = state.aside
        improved = update_leaders(state, config, sample, score)
        state.aside = not improved
        assert state.best is not None
        entry = TraceEntry(
            iteration=it,
            config=config,
            sample=sample,
            reward=score,
            failure=failure,
            source=source,
            aside=aside_used,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            direction=direction,
            heuristic=applied,
            collision_attempts=attempts,
            best_reward=state.best.reward,
            prohibited=len(state.prohibited),
        )
        state.trace.append(entry)
        log.debug("iter %d %s reward=%.6g source=%s", it, config, score, source)

    assert state.best is not None
    return TuningResult.from_leader(
        "coral", state.best, constraints, constraints.iteration_budget, state.trace
    )
