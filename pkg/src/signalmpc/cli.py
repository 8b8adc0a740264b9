"""Command-line interface.

Subcommands:
  run          closed-loop simulation of one or more controllers over seeds
  bench        solver latency benchmark on snapshot states, cold solves
  export-milp  encode one horizon problem and write CPLEX LP text
  verify       legality-check a schedule file against a scenario's layout

Exit codes: 0 success, 1 verification failed or run aborted on an illegal
action, 2 bad usage or unreadable input.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path
from random import Random
from statistics import fmean, stdev

from . import legality, milp, plant, sim
from .optimizer import (
    DEFAULT_WEIGHTS,
    HorizonProblem,
    MpcConfig,
    ObjectiveWeights,
    solve,
)
from .plant import ControlAction
from .sim import (
    MetricsReport,
    MpcController,
    ScenarioConfig,
    TimeProgramController,
    fourway_time_program,
)
from .topology import IntersectionSpec, builtin_fourway, require_valid

BUILTIN_SCENARIO = "builtin:fourway"


def hardware_info() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "cpu_count": os.cpu_count(),
    }


def load_scenario(name: str, duration_s: int, seed: int) -> ScenarioConfig:
    """A scenario is either the built-in four-way layout or a JSON file with
    keys: spec (layout dict), demand (per-signal probabilities), and optional
    duration_s used as a default."""
    if name == BUILTIN_SCENARIO:
        return ScenarioConfig(
            spec=builtin_fourway(),
            demand=(1 / 12, 1 / 12, 1 / 6, 1 / 6),
            duration_s=duration_s,
            seed=seed,
        )
    path = Path(name)
    data = json.loads(path.read_text())
    spec = require_valid(IntersectionSpec.from_dict(data["spec"]))
    return ScenarioConfig(
        spec=spec,
        demand=tuple(float(p) for p in data["demand"]),
        duration_s=int(data.get("duration_s", duration_s)),
        seed=seed,
    )


def parse_weights(text: str | None) -> ObjectiveWeights:
    """Parse 'queue=1,wait=0.5,stops=1,flow=2,not_green=0.1'; omitted keys keep
    their defaults."""
    if not text:
        return DEFAULT_WEIGHTS
    values = {}
    valid = {"queue", "wait", "stops", "flow", "not_green"}
    for part in text.split(","):
        key, _, raw = part.partition("=")
        key = key.strip()
        if key not in valid or not raw:
            raise ValueError(f"bad weight entry {part!r}; keys are {sorted(valid)}")
        values[key] = float(raw)
    return ObjectiveWeights(**values)


def _parse_controller(label: str, horizon: int, control_horizon: int,
                      weights: ObjectiveWeights):
    """Controller labels: 'timed' (alias 'fixed'), 'mpc', or 'mpc:<C>' to
    override the control horizon for that controller only."""
    if label in ("timed", "fixed"):
        return "timed", TimeProgramController(fourway_time_program())
    if label == "mpc" or label.startswith("mpc:"):
        C = control_horizon
        if label.startswith("mpc:"):
            C = int(label.split(":", 1)[1])
        cfg = MpcConfig(prediction_horizon=horizon, control_horizon=C,
                        weights=weights)
        return f"mpc_C{C}", MpcController(cfg)
    raise ValueError(f"unknown controller {label!r}; use timed, mpc, or mpc:<C>")


CSV_FIELDS = (
    "scenario", "controller", "seed", "P", "C", "vehicles", "avg_tl_s",
    "p95_tl_s", "stops", "throughput", "mean_solve_ms", "sd_solve_ms",
)


def _csv_row(scenario_name, controller_name, seed, report: MetricsReport, cfg: MpcConfig | None):
    return {
        "scenario": scenario_name,
        "controller": controller_name,
        "seed": seed,
        "P": cfg.prediction_horizon if cfg else "",
        "C": cfg.control_horizon if cfg else "",
        "vehicles": report.vehicles_exited,
        "avg_tl_s": f"{report.avg_time_loss_s:.3f}",
        "p95_tl_s": f"{report.p95_time_loss_s:.3f}",
        "stops": report.total_stops,
        "throughput": f"{report.throughput_vph:.1f}",
        "mean_solve_ms": f"{report.mean_solve_ms:.3f}",
        "sd_solve_ms": f"{report.sd_solve_ms:.3f}",
    }


def cmd_run(args) -> int:
    weights = parse_weights(args.weights)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    rows = []
    runs_json = []
    for label in args.controller:
        name, _ = _parse_controller(label, args.horizon, args.control_horizon, weights)
        for seed in seeds:
            scenario = load_scenario(args.scenario, args.duration, seed)
            # Fresh controller per run so warm starts and stats never leak.
            name, controller = _parse_controller(
                label, args.horizon, args.control_horizon, weights
            )
            try:
                report = sim.run(scenario, controller)
            except sim.LegalityAbort as exc:
                print(f"run aborted ({name}, seed {seed}): {exc}", file=sys.stderr)
                return 1
            cfg = controller.config if isinstance(controller, MpcController) else None
            rows.append(_csv_row(args.scenario, name, seed, report, cfg))
            runs_json.append(
                {
                    "scenario": args.scenario,
                    "controller": name,
                    "seed": seed,
                    "P": cfg.prediction_horizon if cfg else None,
                    "C": cfg.control_horizon if cfg else None,
                    "metrics": report.to_dict(),
                }
            )
            print(
                f"{args.scenario} {name} seed={seed}: "
                f"{report.vehicles_exited} vehicles, "
                f"avg TL {report.avg_time_loss_s:.2f} s, "
                f"p95 TL {report.p95_time_loss_s:.2f} s, "
                f"{report.total_stops} stops"
                + (
                    f", solve {report.mean_solve_ms:.2f} ms mean"
                    if report.solves
                    else ""
                )
            )
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.out_csv}")
    if args.out_json:
        manifest = {
            "command": "run",
            "hardware": hardware_info(),
            "weights": asdict(weights),
            "runs": runs_json,
        }
        Path(args.out_json).write_text(json.dumps(manifest, indent=2) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def fixed_time_trajectory(scenario: ScenarioConfig, horizon: int):
    """Plant states and stop-line arrival rows from a fixed-time warmup of the
    built-in four-way program.  ``states[t]`` is the state entering second t
    (so ``states[0]`` is the initial state); arrival rows extend ``horizon``
    steps past the end so every in-range second has a full exact forecast."""
    program = fourway_time_program()
    spec = scenario.spec
    rngs = [Random(scenario.seed * 1_000_003 + i) for i in range(spec.n)]

    # Reproduce the simulator's arrival process without vehicle bookkeeping:
    # spawn seconds map to stop-line arrivals a fixed travel delay later.
    from math import ceil

    delay = ceil(scenario.approach_length_m / scenario.speed_mps)
    total = scenario.duration_s + horizon + delay
    arrivals = [[0] * spec.n for _ in range(total)]
    for t in range(scenario.duration_s):
        for i in range(spec.n):
            if rngs[i].random() < scenario.demand[i]:
                arrivals[t + delay][i] += 1

    states = []
    state = plant.initial_state(spec)
    for t in range(scenario.duration_s):
        states.append(state)
        action = sim.time_program_action(program, t)
        state = plant.step(state, action, tuple(arrivals[t]), spec)
    states.append(state)
    return states, arrivals


def collect_snapshots(scenario: ScenarioConfig, horizon: int, count: int):
    """Evenly spaced (state, forecast) snapshots from a fixed-time warmup run,
    giving the benchmark realistic, controller-independent inputs."""
    states, arrivals = fixed_time_trajectory(scenario, horizon)
    wanted = max(1, count)
    stride = max(1, scenario.duration_s // wanted)
    snapshots = []
    picked = list(range(0, scenario.duration_s, stride))[:wanted]
    for t in picked:
        forecast = tuple(tuple(arrivals[t + m]) for m in range(horizon))
        snapshots.append((states[t], forecast))
    return snapshots


def cmd_bench(args) -> int:
    if args.scenario != BUILTIN_SCENARIO:
        raise ValueError(
            "bench draws snapshots from the built-in four-way warmup; "
            f"only --scenario {BUILTIN_SCENARIO} is supported"
        )
    weights = parse_weights(args.weights)
    scenario = load_scenario(args.scenario, args.duration, args.seed)
    horizons = [int(c) for c in args.control_horizons.split(",") if c.strip()]
    if not horizons:
        raise ValueError("--control-horizons must name at least one C value")
    snapshots = collect_snapshots(scenario, args.horizon, args.samples)
    results = []
    print(f"benchmark: P={args.horizon}, {len(snapshots)} cold solves per C")
    for C in horizons:
        cfg = MpcConfig(prediction_horizon=args.horizon, control_horizon=C, weights=weights)
        times = []
        nodes = []
        for state, forecast in snapshots:
            problem = HorizonProblem(
                spec=scenario.spec, initial=state, arrivals=forecast, config=cfg
            )
            t0 = time.perf_counter()
            report = solve(problem)
            times.append(time.perf_counter() - t0)
            nodes.append(report.nodes_explored)
        ms = [x * 1000.0 for x in times]
        mean_ms = fmean(ms)
        sd_ms = stdev(ms) if len(ms) > 1 else 0.0
        max_ms = max(ms)
        mean_nodes = fmean(nodes)
        results.append(
            {
                "P": args.horizon,
                "C": C,
                "mean_ms": mean_ms,
                "sd_ms": sd_ms,
                "max_ms": max_ms,
                "mean_nodes": mean_nodes,
            }
        )
        print(
            f"  C={C:3d}: mean {mean_ms:8.2f} ms  sd {sd_ms:7.2f} ms  "
            f"max {max_ms:8.2f} ms  nodes {mean_nodes:10.1f}"
        )
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=("P", "C", "mean_ms", "sd_ms", "max_ms", "mean_nodes")
            )
            writer.writeheader()
            for row in results:
                writer.writerow(
                    {
                        "P": row["P"],
                        "C": row["C"],
                        "mean_ms": f"{row['mean_ms']:.3f}",
                        "sd_ms": f"{row['sd_ms']:.3f}",
                        "max_ms": f"{row['max_ms']:.3f}",
                        "mean_nodes": f"{row['mean_nodes']:.1f}",
                    }
                )
        print(f"wrote {args.out_csv}")
    if args.out_json:
        manifest = {
            "command": "bench",
            "hardware": hardware_info(),
            "P": args.horizon,
            "samples": len(snapshots),
            "results": results,
        }
        Path(args.out_json).write_text(json.dumps(manifest, indent=2) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def cmd_export_milp(args) -> int:
    if args.at_second < 0:
        raise ValueError("--at-second must be non-negative")
    weights = parse_weights(args.weights)
    if args.at_second > 0 and args.scenario != BUILTIN_SCENARIO:
        raise ValueError(
            "--at-second replays the built-in four-way warmup; "
            f"only --scenario {BUILTIN_SCENARIO} supports it"
        )
    if args.scenario == BUILTIN_SCENARIO:
        # Deterministic warmup: the exported problem is the one an MPC
        # controller would face at --at-second of a fixed-time run.
        scenario = load_scenario(args.scenario, args.at_second + 1, args.seed)
        states, table = fixed_time_trajectory(scenario, args.horizon)
        initial = states[args.at_second]
        arrivals = tuple(
            tuple(table[args.at_second + m]) for m in range(args.horizon)
        )
    else:
        scenario = load_scenario(args.scenario, args.horizon, args.seed)
        spec = scenario.spec
        rngs = [Random(args.seed * 1_000_003 + i) for i in range(spec.n)]
        initial = plant.initial_state(spec)
        arrivals = tuple(
            tuple(
                1 if rngs[i].random() < scenario.demand[i] else 0
                for i in range(spec.n)
            )
            for _ in range(args.horizon)
        )
    cfg = MpcConfig(
        prediction_horizon=args.horizon,
        control_horizon=args.control_horizon,
        weights=weights,
    )
    problem = HorizonProblem(
        spec=scenario.spec, initial=initial, arrivals=arrivals, config=cfg
    )
    model = milp.encode(problem)
    nbytes = milp.export_lp(model, args.out)
    print(
        f"{model.name}: {len(model.variables)} variables, {len(model.rows)} rows, "
        f"{nbytes} bytes -> {args.out}"
    )
    return 0


def read_schedule(path: str | Path) -> list[ControlAction]:
    actions = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            actions.append(ControlAction.from_letters(text))
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not actions:
        raise ValueError(f"{path}: no actions found")
    return actions


def read_arrivals(path: str | Path, steps: int, n: int) -> list[tuple[int, ...]]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        parts = text.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"{path}:{lineno}: expected {n} counts, got {len(parts)}")
        rows.append(tuple(int(p) for p in parts))
    if len(rows) != steps:
        raise ValueError(f"{path}: {len(rows)} arrival rows for {steps} schedule steps")
    return rows


def cmd_verify(args) -> int:
    scenario = load_scenario(args.scenario, 1, 0)
    spec = scenario.spec
    try:
        schedule = read_schedule(args.schedule)
        if args.arrivals:
            arrivals = read_arrivals(args.arrivals, len(schedule), spec.n)
        else:
            arrivals = [(0,) * spec.n] * len(schedule)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if any(a.n != spec.n for a in schedule):
        print(f"error: schedule width does not match {spec.n} signals", file=sys.stderr)
        return 2
    violations = legality.check_schedule(
        plant.initial_state(spec), schedule, arrivals, spec
    )
    if violations:
        for v in violations:
            print(str(v))
        print(f"FAIL: {len(violations)} violation(s) over {len(schedule)} steps")
        return 1
    print(f"OK: {len(schedule)} steps, no violations")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signalmpc",
        description="Legality-first traffic signal control: simulate, benchmark, export, verify.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_weights=True):
        p.add_argument("--scenario", default=BUILTIN_SCENARIO,
                       help=f"'{BUILTIN_SCENARIO}' or a scenario JSON file")
        p.add_argument("--seed", type=int, default=1)
        if with_weights:
            p.add_argument("--weights", default=None,
                           help="e.g. queue=1,wait=0.5,stops=1,flow=2,not_green=0.1")

    p_run = sub.add_parser("run", help="closed-loop simulation")
    add_common(p_run)
    p_run.add_argument("--controller", action="append", default=None,
                       help="timed, mpc, or mpc:<C>; repeatable")
    p_run.add_argument("--horizon", type=int, default=30, help="prediction horizon P")
    p_run.add_argument("--control-horizon", type=int, default=20, help="control horizon C")
    p_run.add_argument("--duration", type=int, default=3600, help="seconds to simulate")
    p_run.add_argument("--seeds", default=None, help="comma list overriding --seed")
    p_run.add_argument("--out-csv", default=None)
    p_run.add_argument("--out-json", default=None)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="cold-solve latency benchmark")
    add_common(p_bench)
    p_bench.add_argument("--horizon", type=int, default=30)
    p_bench.add_argument("--control-horizons", default="15,20,25,30",
                         help="comma list of C values")
    p_bench.add_argument("--samples", type=int, default=25,
                         help="snapshot states per C")
    p_bench.add_argument("--duration", type=int, default=600,
                         help="warmup seconds snapshots are drawn from")
    p_bench.add_argument("--out-csv", default=None)
    p_bench.add_argument("--out-json", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_milp = sub.add_parser("export-milp", help="write one horizon problem as LP text")
    add_common(p_milp)
    p_milp.add_argument("--horizon", type=int, default=30)
    p_milp.add_argument("--control-horizon", type=int, default=20)
    p_milp.add_argument("--at-second", type=int, default=0,
                        help="export the problem the controller would face at "
                             "this second of a fixed-time warmup (builtin scenario)")
    p_milp.add_argument("--out", required=True)
    p_milp.set_defaults(func=cmd_export_milp)

    p_verify = sub.add_parser("verify", help="legality-check a schedule file")
    add_common(p_verify, with_weights=False)
    p_verify.add_argument("--schedule", required=True,
                          help="text file, one action per line, letters G/Y/A/R")
    p_verify.add_argument("--arrivals", default=None,
                          help="optional arrival counts, one row per step")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and not args.controller:
        args.controller = ["mpc"]
    try:
        return args.func(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
