"""Command line entry point: profile, tune, compare, tradeoff, bench."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .config_space import load_spec
from .device import MeasurementProtocol

log = logging.getLogger("edgetune")


def _protocol(args: argparse.Namespace, base: MeasurementProtocol | None = None) -> MeasurementProtocol:
    base = base or MeasurementProtocol()
    return MeasurementProtocol(base.warmup_s, base.readings, base.realtime or args.realtime)


def _load(args: argparse.Namespace) -> harness.Scenario:
    scenario = harness.load_scenario(args.scenario)
    if args.backend:
        scenario.backend_arg = args.backend
        scenario.base_dir = Path.cwd()
    if args.seed is not None:
        scenario.seed = args.seed
    scenario.protocol = _protocol(args, scenario.protocol)
    return scenario


def do_profile(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    table = harness.cmd_profile(spec, args.backend or "synthetic", args.out, args.seed, _protocol(args))
    invalid = sum(not r.valid for r in table.records.values())
    print(f"wrote {len(table)} rows ({invalid} invalid) to {args.out}")
    return harness.EXIT_OK


def do_tune(args: argparse.Namespace) -> int:
    scenario = _load(args)
    result, code = harness.cmd_tune(scenario, args.out)
    status = "feasible" if result.feasible else "INFEASIBLE"
    print(
        f"{status}: {result.best_config} "
        f"{result.throughput:.2f} fps @ {result.power:.0f} mW "
        f"after {result.iterations_used} iterations -> {args.out}"
    )
    return code


def do_compare(args: argparse.Namespace) -> int:
    scenario = _load(args)
    report = harness.cmd_compare(scenario, harness.parse_methods(args.methods), args.out)
    sys.stdout.write(report.to_text())
    return harness.EXIT_OK


def do_tradeoff(args: argparse.Namespace) -> int:
    rows = harness.cmd_tradeoff(args.profile, args.out)
    print(f"wrote {len(rows)} points ({sum(r[3] for r in rows)} on the frontier) to {args.out}")
    return harness.EXIT_OK


def do_bench(args: argparse.Namespace) -> int:
    from .landscapes import convergence_study

    spec = load_spec(args.spec)
    outcomes = convergence_study(spec, args.count, args.seed or 0, args.budget)
    n = len(outcomes)
    coral = sum(o.coral_feasible for o in outcomes)
    rand = sum(o.random_feasible for o in outcomes)
    ratios = [o.efficiency_ratio for o in outcomes if o.efficiency_ratio is not None]
    median = float(np.median(ratios)) if ratios else float("nan")
    print(f"{spec.device_name}: {n} landscapes, budget {args.budget}")
    print(f"  coral feasible  {coral}/{n} ({100 * coral / n:.0f}%)")
    print(f"  random feasible {rand}/{n} ({100 * rand / n:.0f}%)")
    print(f"  median coral/oracle efficiency {median:.3f}")
    return harness.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgetune", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--backend", help="table:<profile.csv> | synthetic[:<params.yaml>] | adapter")
        p.add_argument("--seed", type=int)
        p.add_argument("--realtime", action="store_true", help="sleep through warm-up and readings")

    p = sub.add_parser("profile", help="measure every configuration and write a profile CSV")
    p.add_argument("--spec", required=True, help="built-in spec name or spec YAML path")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=do_profile)

    p = sub.add_parser("tune", help="run the correlation-guided tuner on a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=do_tune)

    p = sub.add_parser("compare", help="run several methods on one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--methods", default=",".join(harness.DEFAULT_METHODS))
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=do_compare)

    p = sub.add_parser("tradeoff", help="power/throughput scatter with Pareto flags")
    p.add_argument("profile")
    p.add_argument("--out", required=True)
    p.set_defaults(func=do_tradeoff)

    p = sub.add_parser("bench", help="convergence study over seeded synthetic landscapes")
    p.add_argument("--spec", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--budget", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="first landscape seed")
    p.set_defaults(func=do_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - exit code 1 covers every failure
        if args.verbose:
            log.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
