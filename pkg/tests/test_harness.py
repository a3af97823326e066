import csv
import io
import json
import textwrap

import numpy as np
import pytest

from edgetune import harness
from edgetune.baselines import NotEnumerable
from edgetune.config_space import DIMENSIONS, dump_spec, spec_from_dict
from edgetune.device import SyntheticBackend, dump_profile, render_profile

from conftest import WINDOW_CPU, WINDOW_FPS, WINDOW_MW, cfg


def write(path, text):
    path.write_text(textwrap.dedent(text).lstrip())
    return path


@pytest.fixture
def xavier_csv(tmp_path, xavier):
    path = tmp_path / "xavier.csv"
    dump_profile(SyntheticBackend(xavier), path)
    return path


def scenario_text(backend="table:xavier.csv", target=30, budget=6500, extra=""):
    return f"""
    name: dual
    spec: xavier-nx
    backend: {backend}
    constraints:
      throughput_target_fps: {target}
      power_budget_mw: {budget}
    {extra}
    """


def toy_profile(tmp_path):
    text = (
        "device,cpu_cores,cpu_freq_mhz,gpu_freq_mhz,mem_freq_mhz,concurrency,throughput_fps,power_mw,valid\n"
        "toy,2,1000,510,1500,1,20,5000,1\n"
        "toy,2,1000,510,1500,2,26,5600,1\n"
        "toy,2,1400,510,1500,1,29,6200,1\n"
        "toy,2,1400,510,1500,2,33,6400,1\n"
    )
    (tmp_path / "toy.csv").write_text(text)
    spec = spec_from_dict(
        {
            "device_name": "toy",
            "axes": {
                "cpu_freq": [1000, 1400],
                "cpu_cores": [2],
                "gpu_freq": [510],
                "mem_freq": [1500],
                "concurrency": [1, 2],
            },
        }
    )
    dump_spec(spec, tmp_path / "toy.yaml")


def toy_scenario(tmp_path, target=30, budget=4):
    toy_profile(tmp_path)
    return write(
        tmp_path / f"toy_{target}.yaml",
        f"""
        name: toy
        spec: toy.yaml
        backend: table:toy.csv
        constraints:
          throughput_target_fps: {target}
          power_budget_mw: 6500
          iteration_budget: {budget}
        """,
    )


def test_profile_writes_whole_grid(tmp_path, xavier):
    out = tmp_path / "p.csv"
    harness.cmd_profile(xavier, "synthetic", out)
    assert len(out.read_text().splitlines()) == 2161
    again = tmp_path / "q.csv"
    harness.cmd_profile(xavier, "synthetic", again)
    assert out.read_bytes() == again.read_bytes()


def test_profile_singleton_spec(tmp_path):
    spec = spec_from_dict({"device_name": "one", "axes": {d: [3] for d in DIMENSIONS}})
    out = tmp_path / "one.csv"
    harness.cmd_profile(spec, "synthetic", out)
    assert len(out.read_text().splitlines()) == 2


def test_profile_unwritable_path(tmp_path, xavier):
    with pytest.raises(OSError):
        harness.cmd_profile(xavier, "synthetic", tmp_path / "missing" / "p.csv")


def test_tune_toy_table(tmp_path):
    scenario = harness.load_scenario(toy_scenario(tmp_path))
    out = tmp_path / "t.json"
    result, code = harness.cmd_tune(scenario, out)
    record = json.loads(out.read_text())
    assert code == harness.EXIT_OK
    assert len(record["result"]["trace"]) == 4
    assert record["result"]["feasible"] is True
    assert record["result"]["best_config"]["cpu_freq"] == 1400
    first = record["result"]["trace"][2]
    assert {"aside", "alpha", "beta", "gamma", "reward", "config", "sample"} <= set(first)


def test_tune_infeasible_exit_code(tmp_path):
    scenario = harness.load_scenario(toy_scenario(tmp_path, target=90))
    result, code = harness.cmd_tune(scenario, tmp_path / "t.json")
    assert not result.feasible and code == harness.EXIT_INFEASIBLE


def test_window_example_weights_in_tune_output(tmp_path):
    cores = [4, 5, 4, 4, 3]
    lines = ["device,cpu_cores,cpu_freq_mhz,gpu_freq_mhz,mem_freq_mhz,concurrency,throughput_fps,power_mw,valid"]
    seeded = {(cpu, c): (f, p) for cpu, c, f, p in zip(WINDOW_CPU, cores, WINDOW_FPS, WINDOW_MW)}
    for c in (3, 4, 5):
        for cpu in (1000, 1200, 1400):
            f, p = seeded.get((cpu, c), (10 + cpu / 200 + c, 9000 + cpu / 2))
            lines.append(f"w,{c},{cpu},510,1500,1,{f},{p},1")
    (tmp_path / "w.csv").write_text("\n".join(lines) + "\n")
    init = "\n".join(
        f"      - {{cpu_freq: {cpu}, cpu_cores: {c}, gpu_freq: 510, mem_freq: 1500, concurrency: 1}}"
        for cpu, c in zip(WINDOW_CPU, cores)
    )
    text = f"""name: window
spec: w.yaml
backend: table:w.csv
init_policy:
{init}
constraints:
  throughput_target_fps: 30
  power_budget_mw: 12000
  iteration_budget: 6
"""
    spec = spec_from_dict(
        {"device_name": "w", "axes": {"cpu_freq": [1000, 1200, 1400], "cpu_cores": [3, 4, 5],
                                      "gpu_freq": [510], "mem_freq": [1500], "concurrency": [1]}}
    )
    dump_spec(spec, tmp_path / "w.yaml")
    (tmp_path / "window.yaml").write_text(text)
    scenario = harness.load_scenario(tmp_path / "window.yaml")
    harness.cmd_tune(scenario, tmp_path / "w.json")
    trace = json.loads((tmp_path / "w.json").read_text())["result"]["trace"]
    sixth = trace[5]
    i = DIMENSIONS.index("cpu_freq")
    assert sixth["alpha"][i] == pytest.approx(0.94, abs=0.01)
    assert sixth["beta"][i] == pytest.approx(0.99, abs=0.01)


@pytest.mark.parametrize(
    "body, field",
    [
        ("constraints: {power_budget_mw: 6500}", "constraints.throughput_target_fps"),
        ("constraints: {throughput_target_fps: 30, power_budget_mw: 6500, window_size: 1}", "constraints.window_size"),
        ("constraints: {throughput_target_fps: 30, power_budget_mw: 6500}\nheuristic: greedy", "heuristic"),
        ("constraints: {throughput_target_fps: 30, power_budget_mw: 6500}\ncolour: red", "colour"),
        ("constraints: {throughput_target_fps: 30, power_budget_mw: 6500, power_floor_mw: 7000}", "constraints"),
        ("constraints: {throughput_target_fps: 30, power_budget_mw: 6500}\nspec: nope.yaml", "spec"),
    ],
)
def test_scenario_errors_name_the_field(body, field):
    with pytest.raises(harness.ScenarioError) as err:
        harness.parse_scenario(body)
    assert str(err.value).startswith(field)


def test_scenario_rejects_non_mapping():
    with pytest.raises(harness.ScenarioError):
        harness.parse_scenario("- 1\n- 2\n")
    with pytest.raises(harness.ScenarioError):
        harness.parse_scenario("a: [\n")


def test_compare_report(tmp_path, xavier_csv):
    scenario = harness.parse_scenario(scenario_text(), tmp_path)
    report = harness.cmd_compare(scenario, harness.parse_methods(None), tmp_path / "r.csv")
    assert [r.method for r in report.rows] == ["coral", "oracle", "random10", "max_power", "default"]
    oracle = report.row("oracle")
    assert all(oracle.reward >= r.reward for r in report.rows)
    coral = report.row("coral")
    assert coral.efficiency / oracle.efficiency <= 1.0
    assert oracle.pct_oracle_efficiency == pytest.approx(100.0)
    rows = list(csv.DictReader(io.StringIO((tmp_path / "r.csv").read_text())))
    assert len(rows) == 5
    assert rows[0]["spec_hash"] == scenario.spec.digest()
    assert "dual on xavier-nx" in report.to_text()


def test_compare_without_oracle_has_no_percentages(tmp_path, xavier_csv):
    scenario = harness.parse_scenario(scenario_text(), tmp_path)
    report = harness.compare(scenario, ["coral", "random5"])
    assert all(r.pct_oracle_throughput is None for r in report.rows)
    assert report.row("random5").evaluations == 5


def test_compare_oracle_needs_enumerable_backend(tmp_path):
    scenario = harness.parse_scenario(
        scenario_text("synthetic", extra="synthetic: {noise_stddev_fraction: 0.02}"), tmp_path
    )
    with pytest.raises(NotEnumerable):
        harness.compare(scenario, ["oracle"])
    report = harness.compare(scenario, ["coral", "default"])
    assert len(report.rows) == 2


def test_compare_records_preset_failure(tmp_path, xavier):
    spec_file = tmp_path / "x.yaml"
    data = xavier.to_dict()
    data["presets"] = {"default": xavier.min_config().replace(concurrency=3).to_dict()}
    spec_file.write_text(json.dumps(data))
    scenario = harness.parse_scenario(scenario_text("synthetic").replace("xavier-nx", "x.yaml"), tmp_path)
    report = harness.compare(scenario, ["oracle", "default"])
    row = report.row("default")
    assert row.note.startswith("failed") and not row.feasible and row.reward is None


def test_parse_methods():
    assert harness.parse_methods("coral, oracle,random25") == ["coral", "oracle", "random25"]
    for bad in ("coral,annealing", "", "randomx"):
        with pytest.raises(ValueError):
            harness.parse_methods(bad)


def test_pareto_small_cases():
    assert harness.pareto_flags([5, 6, 7], [10, 20, 15]) == [True, True, False]
    assert harness.pareto_flags([5], [10]) == [True]
    # equal power is not strictly lower, so neither point dominates the other
    assert harness.pareto_flags([5, 5, 6], [10, 12, 11]) == [True, True, False]


def brute_pareto(power, fps):
    return [
        not any(p2 < p and f2 > f for p2, f2 in zip(power, fps)) for p, f in zip(power, fps)
    ]


def test_pareto_random_against_scan():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n = int(rng.integers(1, 60))
        power = rng.integers(1, 20, size=n).tolist()
        fps = rng.integers(1, 20, size=n).tolist()
        assert harness.pareto_flags(power, fps) == brute_pareto(power, fps)


def test_tradeoff_output(tmp_path, xavier_csv):
    out = tmp_path / "t.csv"
    rows = harness.cmd_tradeoff(xavier_csv, out)
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(harness.TRADEOFF_HEADER)
    assert len(lines) == len(rows) + 1 == 1921
    frontier = sorted((p, t) for _, p, t, f in rows if f)
    assert [t for _, t in frontier] == sorted(t for _, t in frontier)


def test_tradeoff_single_row(tmp_path):
    src = tmp_path / "one.csv"
    src.write_text(
        "device,cpu_cores,cpu_freq_mhz,gpu_freq_mhz,mem_freq_mhz,concurrency,throughput_fps,power_mw,valid\n"
        "d,2,1190,510,1500,1,10,4000,1\n"
    )
    rows = harness.cmd_tradeoff(src, tmp_path / "o.csv")
    assert [r[3] for r in rows] == [True]
    empty = tmp_path / "bad.csv"
    empty.write_text(src.read_text().replace("10,4000,1", ",,0"))
    with pytest.raises(ValueError):
        harness.cmd_tradeoff(empty, tmp_path / "o.csv")


def test_build_backend_variants(tmp_path, xavier):
    params = write(tmp_path / "p.yaml", "peak_throughput: 50\nfail_max_concurrency_min_mem: false\n")
    b = harness.build_backend("synthetic:p.yaml", xavier, tmp_path, seed=3)
    assert b.params.peak_throughput == 50 and b.params.seed == 3
    assert harness.build_backend("adapter", xavier).spec is xavier
    for bad in ("table:", "cloud"):
        with pytest.raises(ValueError):
            harness.build_backend(bad, xavier)
