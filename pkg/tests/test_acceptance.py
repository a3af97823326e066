"""Acceptance checks. Each test prints one PASS/FAIL line and asserts the same verdict."""
import time
from dataclasses import replace
from math import isclose

import numpy as np
import pytest

from edgetune import harness
from edgetune.baselines import PresetMode, oracle_search, preset_eval, random_search
from edgetune.config_space import DIMENSIONS, ProhibitedSet, builtin_spec, enumerate_grid, validate
from edgetune.dcov import correlation_weights, distance_correlation, distance_covariance_sq
from edgetune.device import MeasurementSample, SyntheticBackend, dump_profile, profile_backend
from edgetune.landscapes import convergence_study, make_landscape
from edgetune.optimizer import CoralState, SampleWindow, ScenarioConstraints, propose_next, reward, run, update_leaders

from conftest import WINDOW_CPU, WINDOW_FPS, WINDOW_MW, report_criterion


def test_criterion_01_window_example():
    start = time.perf_counter()
    configs = [(cpu, 4 + (i == 1) - (i == 4), 810, 1600, 2) for i, cpu in enumerate(WINDOW_CPU)]
    alpha, beta = correlation_weights(configs, WINDOW_FPS, WINDOW_MW)
    elapsed = time.perf_counter() - start
    a, b = alpha[DIMENSIONS.index("cpu_freq")], beta[DIMENSIONS.index("cpu_freq")]
    ok = abs(a - 0.94) <= 0.01 and abs(b - 0.99) <= 0.01 and elapsed < 1.0
    assert report_criterion(1, ok, f"alpha_cpu={a:.4f} beta_cpu={b:.4f} in {elapsed * 1000:.1f} ms")


def _triple_sum(x, y):
    n = len(x)
    a = np.abs(np.subtract.outer(x, x))
    b = np.abs(np.subtract.outer(y, y))
    s1 = 0.0
    s3 = 0.0
    for i in range(n):
        for j in range(n):
            s1 += a[i, j] * b[i, j]
            for k in range(n):
                s3 += a[i, j] * b[i, k]
    return s1 / n**2 + (a.sum() / n**2) * (b.sum() / n**2) - 2 * s3 / n**3


def test_criterion_02_matrix_form_vs_direct():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 51))
        x = rng.uniform(-50, 50, n)
        y = np.sin(x) + 0.3 * rng.normal(size=n)
        direct = _triple_sum(x, y)
        worst = max(worst, abs(distance_covariance_sq(x, y) - direct) / abs(direct))
    assert report_criterion(2, worst <= 1e-9, f"max relative error {worst:.2e} over 100 pairs")


def test_criterion_03_dcor_properties():
    rng = np.random.default_rng(3)
    failures = []
    for case in range(1000):
        n = int(rng.integers(2, 40))
        x = rng.normal(size=n) * rng.uniform(0.01, 1e3)
        y = rng.normal(size=n) + (rng.uniform() < 0.5) * x
        r = distance_correlation(x, y)
        scale, shift = rng.uniform(0.1, 10) * rng.choice([-1, 1]), rng.uniform(-1e3, 1e3)
        checks = {
            "range": 0.0 <= r <= 1.0,
            "symmetry": isclose(r, distance_correlation(y, x), abs_tol=1e-12),
            "self": isclose(distance_correlation(x, x), 1.0, abs_tol=1e-12),
            "affine": abs(distance_correlation(scale * x + shift, y) - r) <= 1e-9,
            "zero-variance": distance_correlation(x, np.full(n, rng.normal())) == 0.0,
        }
        failures += [(case, k) for k, ok in checks.items() if not ok]
    assert report_criterion(3, not failures, f"1000 cases, {len(failures)} property violations {failures[:3]}")


def test_criterion_04_reward_structure():
    rng = np.random.default_rng(4)
    bad = 0
    ps = ProhibitedSet()
    grid = enumerate_grid(builtin_spec("xavier-nx"))
    for i in range(1000):
        cons = ScenarioConstraints(float(rng.uniform(1, 60)), float(rng.uniform(3000, 10000)))
        c = grid[i % len(grid)]
        s = MeasurementSample(c, float(rng.uniform(0, 80)), float(rng.uniform(2000, 12000)))
        r = reward(s, cons, ps)
        if cons.feasible(s):
            bad += not (r > 0 and c not in ps)
        else:
            bad += not (r < 0 and c in ps)
    edge = ProhibitedSet()
    boundary = MeasurementSample(grid[0], 30.0, 6500.0)
    boundary_ok = reward(boundary, ScenarioConstraints(30, 6500), edge) > 0 and len(edge) == 0
    ok = bad == 0 and boundary_ok
    assert report_criterion(4, ok, f"{bad} sign/prohibition violations in 1000 tuples, boundary feasible={boundary_ok}")


def test_criterion_05_grid_sizes():
    sizes = {name: len(enumerate_grid(builtin_spec(name))) for name in ("xavier-nx", "orin-nano")}
    ok = sizes == {"xavier-nx": 2160, "orin-nano": 1600}
    assert report_criterion(5, ok, f"grid sizes {sizes}")


def test_criterion_06_search_hygiene():
    rng = np.random.default_rng(6)
    bad_valid = bad_fresh = 0
    calls = 0
    for name in ("xavier-nx", "orin-nano"):
        spec = builtin_spec(name)
        grid = enumerate_grid(spec)
        for _ in range(5000):
            st = CoralState(window=SampleWindow(5))
            for idx in rng.choice(len(grid), size=int(rng.integers(2, 60)), replace=False):
                c = grid[int(idx)]
                s = MeasurementSample(c, float(rng.uniform(5, 80)), float(rng.uniform(3000, 10000)))
                cons = ScenarioConstraints(float(rng.uniform(10, 60)), float(rng.uniform(4000, 9000)))
                update_leaders(st, c, s, reward(s, cons, st.prohibited))
                st.evaluated.add(c)
            st.aside = bool(rng.integers(2))
            st.last_sample = s
            weights = (rng.random(5).tolist(), rng.random(5).tolist())
            out = propose_next(st, weights, cons, spec, heuristic=str(rng.choice(["cores", "freq", "both", "none"])))
            calls += 1
            bad_valid += bool(validate(out, spec))
            bad_fresh += out in st.prohibited
    traces_ok = True
    for name in ("xavier-nx", "orin-nano"):
        spec = builtin_spec(name)
        for seed in range(20):
            land = make_landscape(spec, seed)
            for budget in (3, 10, 17):
                res = run(land.table, replace(land.constraints, iteration_budget=budget), seed=seed)
                best = [t.best_reward for t in res.trace]
                traces_ok &= len(res.trace) == budget and best == sorted(best)
    ok = calls == 10_000 and bad_valid == 0 and bad_fresh == 0 and traces_ok
    assert report_criterion(
        6, ok, f"{calls} proposals, {bad_valid} invalid, {bad_fresh} prohibited; traces exact and monotone={traces_ok}"
    )


def test_criterion_07_convergence():
    start = time.perf_counter()
    parts, ok = [], True
    for name in ("xavier-nx", "orin-nano"):
        outcomes = convergence_study(builtin_spec(name), count=50)
        assert all(0 < o.feasible_fraction <= 0.05 for o in outcomes)
        coral = sum(o.coral_feasible for o in outcomes)
        rand = sum(o.random_feasible for o in outcomes)
        ratios = [o.efficiency_ratio for o in outcomes if o.efficiency_ratio is not None]
        median = float(np.median(ratios)) if ratios else 0.0
        device_ok = coral >= 45 and median >= 0.8 and rand < coral
        ok &= device_ok
        parts.append(f"{name} coral {coral}/50 random {rand}/50 median eff {median:.2f} ({'ok' if device_ok else 'short'})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    assert report_criterion(7, ok, "; ".join(parts) + f"; {elapsed:.1f} s")


def test_criterion_08_oracle_dominance():
    violations, checked = 0, 0
    tables = []
    for name in ("xavier-nx", "orin-nano"):
        spec = builtin_spec(name)
        tables.append((spec, profile_backend(SyntheticBackend(spec)), [(30, 6500), (60, 5600), (20, 5000), (12, 4000)]))
        for seed in range(10):
            land = make_landscape(spec, seed)
            c = land.constraints
            tables.append((spec, land.table, [(c.throughput_target, c.power_budget)]))
    for spec, tab, pairs in tables:
        for target, budget in pairs:
            cons = ScenarioConstraints(target, budget)
            top = oracle_search(tab, cons).reward
            rivals = [
                run(tab, cons).reward,
                random_search(tab, cons).reward,
                preset_eval(tab, PresetMode.from_spec(spec, "max_power"), cons).reward,
                preset_eval(tab, PresetMode.from_spec(spec, "default"), cons).reward,
            ]
            checked += len(rivals)
            violations += sum(r > top for r in rivals)
    assert report_criterion(8, violations == 0, f"{checked} comparisons, {violations} where a method beat the oracle")


def test_criterion_09_determinism(tmp_path):
    spec = builtin_spec("xavier-nx")
    scenario_text = (
        "name: det\nspec: xavier-nx\nbackend: table:a_profile.csv\nseed: 9\n"
        "constraints: {throughput_target_fps: 30, power_budget_mw: 6500}\n"
    )
    outputs = []
    for rep in range(2):
        d = tmp_path / f"run{rep}"
        d.mkdir()
        dump_profile(SyntheticBackend(spec), d / "a_profile.csv")
        (d / "s.yaml").write_text(scenario_text)
        scenario = harness.load_scenario(d / "s.yaml")
        harness.cmd_tune(scenario, d / "tune.json")
        harness.cmd_compare(scenario, harness.parse_methods(None), d / "report.csv")
        outputs.append([(d / f).read_bytes() for f in ("a_profile.csv", "tune.json", "report.csv")])
    same = [a == b for a, b in zip(*outputs)]
    assert report_criterion(9, all(same), f"profile/trace/report identical across two runs: {same}")


def test_criterion_10_pareto(tmp_path):
    spec = builtin_spec("xavier-nx")
    dump_profile(SyntheticBackend(spec), tmp_path / "x.csv")
    rows = harness.cmd_tradeoff(tmp_path / "x.csv", tmp_path / "t.csv")
    power = np.array([r[1] for r in rows])
    fps = np.array([r[2] for r in rows])
    dominated = ((power[None, :] < power[:, None]) & (fps[None, :] > fps[:, None])).any(axis=1)
    flags = np.array([r[3] for r in rows])
    mismatches = int(np.sum(flags == dominated))
    assert report_criterion(
        10, mismatches == 0, f"{len(rows)} points, {int(flags.sum())} on frontier, {mismatches} disagreements with O(n^2) scan"
    )
