"""Profiling, tuning, comparison and trade-off commands behind the CLI."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import baselines, optimizer
from .config_space import ENUMERATION_ORDER, Configuration, DeviceSpec, SpecError, load_spec
from .device import (
    DEFAULT_PROTOCOL,
    DeviceBackend,
    InfeasibleHardware,
    JetsonAdapterBackend,
    MeasurementProtocol,
    SyntheticBackend,
    SyntheticSurfaceParams,
    TableBackend,
    dump_profile,
    load_profile,
)
from .optimizer import ScenarioConstraints, TuningResult

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

DEFAULT_METHODS = ("coral", "oracle", "random10", "max_power", "default")


class ScenarioError(ValueError):
    """A scenario file failed validation; the message names the fields."""


# ---------------------------------------------------------------------------
# scenario file schema


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConstraintsModel(_Strict):
    throughput_target_fps: float = Field(gt=0)
    power_budget_mw: float = Field(gt=0)
    power_floor_mw: float = Field(0.0, ge=0)
    window_size: int = Field(5, ge=2)
    iteration_budget: int = Field(10, ge=1)


class ProtocolModel(_Strict):
    warmup_s: int = Field(2, ge=0)
    readings: int = Field(3, ge=1)
    realtime: bool = False


class ScenarioModel(_Strict):
    name: str = "scenario"
    spec: str = "xavier-nx"
    backend: str = "synthetic"
    synthetic: dict | None = None
    constraints: ConstraintsModel
    init_policy: Union[Literal["mid_max", "random"], list[dict[str, int]]] = "mid_max"
    heuristic: Literal["cores", "freq", "both", "none"] = "cores"
    seed: int = 0
    random_trials: int = Field(10, ge=1)
    protocol: ProtocolModel = Field(default_factory=ProtocolModel)


@dataclass
class Scenario:
    name: str
    spec: DeviceSpec
    backend_arg: str
    constraints: ScenarioConstraints
    init_policy: object
    heuristic: str
    seed: int
    random_trials: int
    protocol: MeasurementProtocol
    base_dir: Path = field(default_factory=Path.cwd)
    synthetic: dict | None = None
    digest: str = ""

    def build_backend(self) -> DeviceBackend:
        return build_backend(self.backend_arg, self.spec, self.base_dir, self.synthetic, self.seed)


def _resolve(base: Path, value: str) -> str:
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def _format_validation(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_scenario(text: str, base_dir: Path | None = None) -> Scenario:
    base_dir = base_dir or Path.cwd()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    try:
        model = ScenarioModel.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(_format_validation(exc)) from None

    spec_ref = model.spec
    if spec_ref.endswith((".yaml", ".yml")):
        spec_ref = _resolve(base_dir, spec_ref)
    try:
        spec = load_spec(spec_ref)
    except (OSError, SpecError) as exc:
        raise ScenarioError(f"spec: {exc}") from None

    c = model.constraints
    try:
        constraints = ScenarioConstraints(
            c.throughput_target_fps,
            c.power_budget_mw,
            c.power_floor_mw,
            c.window_size,
            c.iteration_budget,
        )
    except ValueError as exc:
        raise ScenarioError(f"constraints: {exc}") from None

    init_policy: object = model.init_policy
    if isinstance(init_policy, list):
        try:
            init_policy = [Configuration.from_mapping(c) for c in init_policy]
        except SpecError as exc:
            raise ScenarioError(f"init_policy: {exc}") from None

    p = model.protocol
    return Scenario(
        name=model.name,
        spec=spec,
        backend_arg=model.backend,
        constraints=constraints,
        init_policy=init_policy,
        heuristic=model.heuristic,
        seed=model.seed,
        random_trials=model.random_trials,
        protocol=MeasurementProtocol(p.warmup_s, p.readings, p.realtime),
        base_dir=base_dir,
        synthetic=model.synthetic,
        digest=hashlib.sha256(text.encode("utf-8")).hexdigest()[:16],
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.parent)


def build_backend(
    arg: str,
    spec: DeviceSpec,
    base_dir: Path | None = None,
    inline_params: dict | None = None,
    seed: int | None = None,
) -> DeviceBackend:
    """Backend from ``table:<csv>``, ``synthetic``, ``synthetic:<params.yaml>`` or ``adapter``."""
    base_dir = base_dir or Path.cwd()
    kind, _, target = arg.partition(":")
    if kind == "table":
        if not target:
            raise ValueError("table backend needs a path: table:<profile.csv>")
        return load_profile(_resolve(base_dir, target), spec)
    if kind == "synthetic":
        if target:
            params = SyntheticSurfaceParams.load(_resolve(base_dir, target))
        else:
            params = SyntheticSurfaceParams.from_mapping(inline_params or {})
        if seed is not None:
            params = replace(params, seed=seed)
        return SyntheticBackend(spec, params)
    if kind == "adapter":
        return JetsonAdapterBackend(spec)
    raise ValueError(f"unknown backend {arg!r}; use table:<path>, synthetic[:<params>] or adapter")


# ---------------------------------------------------------------------------
# profile


def cmd_profile(
    spec: DeviceSpec,
    backend_arg: str,
    out_csv: str | Path,
    seed: int | None = None,
    protocol: MeasurementProtocol = DEFAULT_PROTOCOL,
) -> TableBackend:
    backend = build_backend(backend_arg, spec, seed=seed)
    return dump_profile(backend, out_csv, protocol)


# ---------------------------------------------------------------------------
# tune


def run_coral(scenario: Scenario, backend: DeviceBackend) -> TuningResult:
    return optimizer.run(
        backend,
        scenario.constraints,
        spec=scenario.spec,
        init_policy=scenario.init_policy,
        seed=scenario.seed,
        heuristic=scenario.heuristic,
        protocol=scenario.protocol,
    )


def tune_record(scenario: Scenario, result: TuningResult) -> dict:
    return {
        "scenario": scenario.name,
        "device": scenario.spec.device_name,
        "seed": scenario.seed,
        "spec_hash": scenario.spec.digest(),
        "scenario_hash": scenario.digest,
        "backend": scenario.backend_arg,
        "heuristic": scenario.heuristic,
        "constraints": scenario.constraints.to_dict(),
        "result": result.to_dict(),
    }


def cmd_tune(scenario: Scenario, out_json: str | Path) -> tuple[TuningResult, int]:
    result = run_coral(scenario, scenario.build_backend())
    text = json.dumps(tune_record(scenario, result), indent=2) + "\n"
    Path(out_json).write_text(text, encoding="utf-8")
    return result, EXIT_OK if result.feasible else EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# compare


@dataclass(frozen=True)
class ReportRow:
    method: str
    config: Configuration
    throughput: float | None
    power: float | None
    efficiency: float | None
    reward: float | None
    feasible: bool
    evaluations: int
    pct_oracle_throughput: float | None = None
    pct_oracle_efficiency: float | None = None
    note: str = ""


@dataclass
class ComparisonReport:
    scenario: str
    device: str
    constraints: ScenarioConstraints
    seed: int
    spec_hash: str
    scenario_hash: str
    rows: list[ReportRow]

    COLUMNS = (
        "method",
        *("cpu_cores", "cpu_freq_mhz", "gpu_freq_mhz", "mem_freq_mhz", "concurrency"),
        "throughput_fps",
        "power_mw",
        "efficiency_fps_per_mw",
        "reward",
        "feasible",
        "evaluations",
        "pct_oracle_throughput",
        "pct_oracle_efficiency",
        "note",
        "seed",
        "spec_hash",
        "scenario_hash",
    )

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            writer.writerow(
                [
                    r.method,
                    *(getattr(r.config, d) for d in ENUMERATION_ORDER),
                    _num(r.throughput),
                    _num(r.power),
                    _num(r.efficiency),
                    _num(r.reward),
                    int(r.feasible),
                    r.evaluations,
                    _num(r.pct_oracle_throughput),
                    _num(r.pct_oracle_efficiency),
                    r.note,
                    self.seed,
                    self.spec_hash,
                    self.scenario_hash,
                ]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        c = self.constraints
        lines = [
            f"{self.scenario} on {self.device}: target {c.throughput_target:g} fps, "
            f"budget {c.power_budget:g} mW (seed {self.seed})",
            f"{'method':<10} {'fps':>8} {'mW':>9} {'fps/W':>8} {'feasible':>8} {'evals':>6} "
            f"{'%orc fps':>9} {'%orc eff':>9}  config",
        ]
        for r in self.rows:
            eff = None if r.efficiency is None else r.efficiency * 1000
            lines.append(
                f"{r.method:<10} {_cell(r.throughput, '.1f'):>8} {_cell(r.power, '.0f'):>9} "
                f"{_cell(eff, '.3f'):>8} {('yes' if r.feasible else 'no'):>8} {r.evaluations:>6} "
                f"{_cell(r.pct_oracle_throughput, '.1f'):>9} {_cell(r.pct_oracle_efficiency, '.1f'):>9}  "
                f"{r.config}{'  ' + r.note if r.note else ''}"
            )
        return "\n".join(lines) + "\n"


def _num(x: float | None) -> str:
    return "" if x is None else f"{x:.10g}"


def _cell(x: float | None, fmt: str) -> str:
    return "-" if x is None else format(x, fmt)


def _row_from_result(result: TuningResult) -> ReportRow:
    sample = result.best_sample
    return ReportRow(
        method=result.method,
        config=result.best_config,
        throughput=None if sample is None else sample.throughput,
        power=None if sample is None else sample.power,
        efficiency=None if sample is None else result.efficiency,
        reward=result.reward,
        feasible=result.feasible,
        evaluations=result.iterations_used,
    )


def run_method(method: str, scenario: Scenario, backend: DeviceBackend) -> TuningResult:
    if method == "coral":
        return run_coral(scenario, backend)
    if method == "oracle":
        return baselines.oracle_search(backend, scenario.constraints, scenario.protocol)
    if method.startswith("random"):
        suffix = method[len("random"):]
        trials = int(suffix) if suffix else scenario.random_trials
        return baselines.random_search(
            backend, scenario.constraints, trials, scenario.seed, scenario.protocol
        )
    if method in baselines.PRESET_MODES:
        mode = baselines.PresetMode.from_spec(scenario.spec, method)
        return baselines.preset_eval(backend, mode, scenario.constraints, scenario.protocol)
    raise ValueError(f"unknown method {method!r}")


def parse_methods(text: str | Sequence[str] | None) -> list[str]:
    if text is None:
        return list(DEFAULT_METHODS)
    items = text.split(",") if isinstance(text, str) else list(text)
    methods = [m.strip() for m in items if m.strip()]
    for m in methods:
        ok = m in ("coral", "oracle") or m in baselines.PRESET_MODES
        ok = ok or (m.startswith("random") and (m == "random" or m[6:].isdigit()))
        if not ok:
            raise ValueError(f"unknown method {m!r}")
    if not methods:
        raise ValueError("no methods requested")
    return methods


def compare(scenario: Scenario, methods: Sequence[str], backend: DeviceBackend | None = None) -> ComparisonReport:
    backend = backend or scenario.build_backend()
    if "oracle" in methods and not backend.enumerable:
        raise baselines.NotEnumerable(
            "oracle needs a table backend or a noiseless synthetic backend"
        )
    rows: list[ReportRow] = []
    for method in methods:
        try:
            result = run_method(method, scenario, backend)
        except InfeasibleHardware as exc:
            config = scenario.spec.preset(method) if method in baselines.PRESET_MODES else exc.config
            rows.append(
                ReportRow(method, config, None, None, None, None, False, 1, note=f"failed: {exc.reason}")
            )
            continue
        rows.append(_row_from_result(result))

    oracle = next((r for r in rows if r.method == "oracle"), None)
    if oracle is not None and oracle.throughput:
        rows = [
            replace(
                r,
                pct_oracle_throughput=None if r.throughput is None else 100.0 * r.throughput / oracle.throughput,
                pct_oracle_efficiency=None if r.efficiency is None else 100.0 * r.efficiency / oracle.efficiency,
            )
            for r in rows
        ]
    return ComparisonReport(
        scenario=scenario.name,
        device=scenario.spec.device_name,
        constraints=scenario.constraints,
        seed=scenario.seed,
        spec_hash=scenario.spec.digest(),
        scenario_hash=scenario.digest,
        rows=rows,
    )


def cmd_compare(scenario: Scenario, methods: Sequence[str], out_report: str | Path) -> ComparisonReport:
    report = compare(scenario, methods)
    Path(out_report).write_text(report.to_csv(), encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# trade-off scatter


def pareto_flags(power: Sequence[float], throughput: Sequence[float]) -> list[bool]:
    """True where no other point has both strictly lower power and strictly higher throughput."""
    p = np.asarray(power, dtype=float)
    t = np.asarray(throughput, dtype=float)
    order = np.argsort(p, kind="stable")
    flags = [True] * len(p)
    best_below = -np.inf  # max throughput among strictly lower power
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and p[order[j]] == p[order[i]]:
            j += 1
        group = order[i:j]
        for k in group:
            flags[int(k)] = not (best_below > t[k])
        best_below = max(best_below, float(t[group].max()))
        i = j
    return flags


TRADEOFF_HEADER = (
    "power_mw",
    "throughput_fps",
    "cpu_cores",
    "cpu_freq_mhz",
    "gpu_freq_mhz",
    "mem_freq_mhz",
    "concurrency",
    "pareto",
)


def tradeoff_rows(table: TableBackend) -> list[tuple[Configuration, float, float, bool]]:
    valid = [(c, r.power, r.throughput) for c, r in table.records.items() if r.valid]
    if not valid:
        raise ValueError("profile has no valid rows")
    flags = pareto_flags([v[1] for v in valid], [v[2] for v in valid])
    return [(c, p, t, f) for (c, p, t), f in zip(valid, flags)]


def cmd_tradeoff(profile_csv: str | Path, out_csv: str | Path) -> list[tuple[Configuration, float, float, bool]]:
    rows = tradeoff_rows(load_profile(profile_csv))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRADEOFF_HEADER)
    for config, p, t, flag in rows:
        writer.writerow([_num(p), _num(t), *(getattr(config, d) for d in ENUMERATION_ORDER), int(flag)])
    Path(out_csv).write_text(buf.getvalue(), encoding="utf-8")
    return rows
