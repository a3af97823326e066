"""Seeded families of synthetic landscapes with narrow feasible regions.

Each landscape jitters the default surface coefficients by +/-30% and draws
the shape parameters from ranges typical of a small detector on a Jetson-class
board: the CPU-side cap only binds when both core count and CPU clock are
low, and extra inference instances keep paying off up to the concurrency
limit. The failure predicate and noise are off so every landscape has an
exact profile table.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config_space import DeviceSpec
from .device import SyntheticBackend, SyntheticSurfaceParams, TableBackend, profile_backend
from .baselines import oracle_search, random_search
from .optimizer import ScenarioConstraints, run


@dataclass(frozen=True)
class Landscape:
    seed: int
    params: SyntheticSurfaceParams
    constraints: ScenarioConstraints
    table: TableBackend
    feasible_count: int

    @property
    def feasible_fraction(self) -> float:
        return self.feasible_count / len(self.table)


def random_params(rng: np.random.Generator, base: SyntheticSurfaceParams | None = None) -> SyntheticSurfaceParams:
    base = base or SyntheticSurfaceParams()
    jitter = lambda v: float(v * rng.uniform(0.7, 1.3))  # noqa: E731
    return replace(
        base,
        peak_throughput=jitter(base.peak_throughput),
        idle_power=jitter(base.idle_power),
        cpu_power_coeff=jitter(base.cpu_power_coeff),
        gpu_power_coeff=jitter(base.gpu_power_coeff),
        mem_power_coeff=jitter(base.mem_power_coeff),
        concurrency_power_coeff=jitter(base.concurrency_power_coeff),
        bottleneck_ratio=float(rng.uniform(2.5, 4.0)),
        concurrency_saturation=float(rng.uniform(0.3, 1.0)),
        mem_throughput_share=float(rng.uniform(0.1, 0.5)),
        noise_stddev_fraction=0.0,
        fail_max_concurrency_min_mem=False,
    )


def narrow_constraints(
    table: TableBackend,
    rng: np.random.Generator,
    max_fraction: float = 0.05,
    target_quantile: tuple[float, float] = (0.5, 0.8),
    **kwargs,
) -> tuple[ScenarioConstraints, int]:
    """Throughput target at a random quantile, then the tightest power budget
    that still admits a random 1%..``max_fraction`` slice of the grid."""
    rows = [r for r in table.records.values() if r.valid]
    fps = np.array([r.throughput for r in rows])
    mw = np.array([r.power for r in rows])
    target = float(np.quantile(fps, rng.uniform(*target_quantile)))
    eligible = np.sort(mw[fps >= target])
    want = max(1, int(rng.uniform(0.01, max_fraction) * len(table)))
    budget = float(eligible[min(want, len(eligible)) - 1])
    count = int(np.sum((fps >= target) & (mw <= budget)))
    while count > max_fraction * len(table) and want > 1:
        want -= 1
        budget = float(eligible[want - 1])
        count = int(np.sum((fps >= target) & (mw <= budget)))
    return ScenarioConstraints(target, budget, **kwargs), count


def make_landscape(spec: DeviceSpec, seed: int, max_fraction: float = 0.05) -> Landscape:
    rng = np.random.default_rng([seed, spec.grid_size])
    params = random_params(rng)
    table = profile_backend(SyntheticBackend(spec, params))
    constraints, count = narrow_constraints(table, rng, max_fraction)
    return Landscape(seed, params, constraints, table, count)


@dataclass(frozen=True)
class BenchOutcome:
    seed: int
    feasible_fraction: float
    coral_feasible: bool
    random_feasible: bool
    efficiency_ratio: float | None  # coral / oracle, successful runs only


def convergence_study(
    spec: DeviceSpec,
    count: int = 50,
    first_seed: int = 0,
    budget: int = 10,
    heuristic: str = "cores",
) -> list[BenchOutcome]:
    """Run the tuner, the oracle and budget-matched random search on ``count`` landscapes."""
    outcomes = []
    for seed in range(first_seed, first_seed + count):
        land = make_landscape(spec, seed)
        constraints = replace(land.constraints, iteration_budget=budget)
        coral = run(land.table, constraints, seed=seed, heuristic=heuristic)
        oracle = oracle_search(land.table, constraints)
        rand = random_search(land.table, constraints, trials=budget, seed=seed)
        ratio = coral.efficiency / oracle.efficiency if coral.feasible else None
        outcomes.append(
            BenchOutcome(seed, land.feasible_fraction, coral.feasible, rand.feasible, ratio)
        )
    return outcomes
