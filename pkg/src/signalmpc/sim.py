"""Desk-scale microscopic simulation of one intersection.

Vehicles spawn per signal as independent Bernoulli draws each second, approach
at constant speed along a fixed-length link, queue at the stop line, and leave
in FIFO order while their signal is green. The simulator keeps its own vehicle
ledger and simultaneously rolls the aggregate plant state, asserting the two
agree every second; controllers see only the plant state plus a constant-speed
arrival forecast, and every action is legality-checked before actuation.

Time convention: second t covers [t, t+1). Vehicles spawned at the end of
second t start moving in second t+1; crossing the stop line during second t
stamps departure time t+1.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from math import ceil
from random import Random
from statistics import fmean, stdev
from typing import Callable, Sequence

from . import legality, plant
from .optimizer import MpcConfig, Schedule, mpc_step
from .plant import ArrivalVector, ControlAction, PlantState
from .topology import IntersectionSpec, LightColor, builtin_fourway, require_valid


class LegalityAbort(RuntimeError):
    """A controller emitted an illegal action; the run is aborted."""


@dataclass
class Vehicle:
    signal: int
    spawn_s: int            # first second in motion
    distance_m: float       # to the stop line
    arrive_s: int | None = None   # second the stop line was reached
    depart_s: int | None = None   # end-of-second timestamp of crossing
    stopped: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    spec: IntersectionSpec
    demand: tuple[float, ...]      # per-signal spawn probability per second
    duration_s: int
    seed: int
    approach_length_m: float = 500.0
    speed_mps: float = 13.89

    def __post_init__(self):
        if len(self.demand) != self.spec.n:
            raise ValueError(
                f"demand has {len(self.demand)} entries for {self.spec.n} signals"
            )
        if any(not (0.0 <= p <= 1.0) for p in self.demand):
            raise ValueError("demand probabilities must lie in [0, 1]")
        if self.duration_s < 1:
            raise ValueError("duration must be at least one second")
        if self.approach_length_m <= 0 or self.speed_mps <= 0:
            raise ValueError("approach length and speed must be positive")


@dataclass(frozen=True)
class TimeProgram:
    """A cyclic fixed-time signal program: phases with durations in seconds."""

    phases: tuple[tuple[ControlAction, int], ...]

    def __post_init__(self):
        if not self.phases:
            raise ValueError("a time program needs at least one phase")
        if any(d < 1 for _, d in self.phases):
            raise ValueError("phase durations must be at least one second")

    @property
    def cycle_s(self) -> int:
        return sum(d for _, d in self.phases)

    def unrolled(self, seconds: int) -> list[ControlAction]:
        return [time_program_action(self, t) for t in range(seconds)]


def time_program_action(program: TimeProgram, t: int) -> ControlAction:
    """The program action during second t (phase 0 starts at t=0)."""
    r = t % program.cycle_s
    for action, duration in program.phases:
        if r < duration:
            return action
        r -= duration
    raise AssertionError("unreachable: cycle arithmetic")


def validate_time_program(program: TimeProgram, spec: IntersectionSpec) -> list[str]:
    """Check a program over two full cycles plus one second from the canonical
    initial state, with no arrivals; returns human-readable problems."""
    horizon = 2 * program.cycle_s + 1
    schedule = program.unrolled(horizon)
    arrivals = [(0,) * spec.n] * horizon
    bad = legality.check_schedule(plant.initial_state(spec), schedule, arrivals, spec)
    return [str(v) for v in bad]


def fourway_time_program() -> TimeProgram:
    """72 s fixed-time program for the built-in four-way layout
    (signals N, S, E, W): 20 s north-south green, 4 s yellow, 2 s clearance,
    40 s east-west green, 4 s yellow, 2 s clearance."""
    A = ControlAction.from_letters
    return TimeProgram(
        phases=(
            (A("GGRR"), 20),
            (A("YYRR"), 4),
            (A("RRRR"), 2),
            (A("RRGG"), 40),
            (A("RRYY"), 4),
            (A("RRRR"), 2),
        )
    )


def fourway_scenario(seed: int, duration_s: int = 3600) -> ScenarioConfig:
    """Built-in four-way scenario: one vehicle every 12 s on average from north
    and south, every 6 s from east and west."""
    return ScenarioConfig(
        spec=builtin_fourway(),
        demand=(1 / 12, 1 / 12, 1 / 6, 1 / 6),
        duration_s=duration_s,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Controllers
# ---------------------------------------------------------------------------


class TimeProgramController:
    """Replays a fixed-time program, ignoring state and forecast."""

    forecast_steps = 0

    def __init__(self, program: TimeProgram):
        self.program = program

    def start(self, scenario: ScenarioConfig) -> None:
        problems = validate_time_program(self.program, scenario.spec)
        if problems:
            raise ValueError("illegal time program: " + "; ".join(problems))

    def action(self, t: int, state: PlantState, forecast: Sequence[ArrivalVector]) -> ControlAction:
        return time_program_action(self.program, t)


class MpcController:
    """Receding-horizon controller: re-solves every second and applies the
    first action, warm-starting each solve from the previous schedule."""

    def __init__(self, config: MpcConfig):
        self.config = config
        self.forecast_steps = config.prediction_horizon
        self._warm: Schedule | None = None
        self.solve_times_s: list[float] = []
        self.nodes_explored: list[int] = []
        self.all_proven_optimal = True

    def start(self, scenario: ScenarioConfig) -> None:
        self._warm = None
        self.solve_times_s = []
        self.nodes_explored = []
        self.all_proven_optimal = True
        self._spec = scenario.spec

    def action(self, t: int, state: PlantState, forecast: Sequence[ArrivalVector]) -> ControlAction:
        act, report = mpc_step(state, forecast, self.config, self._spec, warm=self._warm)
        self._warm = report.schedule
        self.solve_times_s.append(report.wall_time)
        self.nodes_explored.append(report.nodes_explored)
        self.all_proven_optimal = self.all_proven_optimal and report.proven_optimal
        return act


# ---------------------------------------------------------------------------
# Mechanics
# ---------------------------------------------------------------------------


def spawn_arrivals(rng: Random, p: float) -> bool:
    """One Bernoulli spawn draw for one signal-second."""
    return rng.random() < p


def forecast_arrivals(
    approaching: Sequence[Sequence[Vehicle]],
    steps: int,
    speed_mps: float,
) -> list[ArrivalVector]:
    """Constant-speed arrival forecast from current vehicle positions.

    A vehicle at distance d reaches the stop line during relative second
    ceil(d / speed) - 1. Vehicles beyond the window are ignored; with the
    built-in geometry nothing unseen can enter it, so the forecast is exact.
    """
    n = len(approaching)
    counts = [[0] * n for _ in range(steps)]
    for i, vehicles in enumerate(approaching):
        for veh in vehicles:
            m = ceil(veh.distance_m / speed_mps) - 1
            if 0 <= m < steps:
                counts[m][i] += 1
    return [tuple(row) for row in counts]


def percentile_95(values: Sequence[float]) -> float:
    """Nearest-rank 95th percentile; 0.0 for an empty sequence."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = ceil(0.95 * len(ordered))
    return ordered[rank - 1]


@dataclass(frozen=True)
class MetricsReport:
    duration_s: int
    seed: int
    vehicles_spawned: int
    vehicles_exited: int
    vehicles_in_system: int
    avg_time_loss_s: float
    p95_time_loss_s: float
    total_stops: int
    throughput_vph: float
    per_signal_spawned: tuple[int, ...]
    per_signal_exited: tuple[int, ...]
    per_signal_avg_time_loss_s: tuple[float, ...]
    per_signal_stops: tuple[int, ...]
    final_queue: tuple[int, ...]
    solves: int
    mean_solve_ms: float
    sd_solve_ms: float
    max_solve_ms: float
    mean_nodes: float
    all_proven_optimal: bool

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration_s,
            "seed": self.seed,
            "vehicles_spawned": self.vehicles_spawned,
            "vehicles_exited": self.vehicles_exited,
            "vehicles_in_system": self.vehicles_in_system,
            "avg_time_loss_s": self.avg_time_loss_s,
            "p95_time_loss_s": self.p95_time_loss_s,
            "total_stops": self.total_stops,
            "throughput_vph": self.throughput_vph,
            "per_signal": {
                "spawned": list(self.per_signal_spawned),
                "exited": list(self.per_signal_exited),
                "avg_time_loss_s": list(self.per_signal_avg_time_loss_s),
                "stops": list(self.per_signal_stops),
            },
            "final_queue": list(self.final_queue),
            "solver": {
                "solves": self.solves,
                "mean_solve_ms": self.mean_solve_ms,
                "sd_solve_ms": self.sd_solve_ms,
                "max_solve_ms": self.max_solve_ms,
                "mean_nodes": self.mean_nodes,
                "all_proven_optimal": self.all_proven_optimal,
            },
        }


TraceHook = Callable[[int, PlantState, ControlAction, ArrivalVector], None]


def run(
    scenario: ScenarioConfig,
    controller,
    trace_hook: TraceHook | None = None,
) -> MetricsReport:
    """Simulate one scenario under one controller and aggregate metrics.

    Raises LegalityAbort the moment the controller emits an illegal action;
    runs are reproducible given (scenario.seed, controller configuration).
    """
    spec = require_valid(scenario.spec)
    n = spec.n
    table = legality.derive_transitions(spec)
    rngs = [Random(scenario.seed * 1_000_003 + i) for i in range(n)]
    free_flow_s = scenario.approach_length_m / scenario.speed_mps
    steps = getattr(controller, "forecast_steps", 0)

    controller.start(scenario)
    state = plant.initial_state(spec)

    approaching: list[deque[Vehicle]] = [deque() for _ in range(n)]
    queues: list[deque[Vehicle]] = [deque() for _ in range(n)]
    exited: list[Vehicle] = []
    spawned = [0] * n
    stops_per_signal = [0] * n
    total_stops = 0

    for t in range(scenario.duration_s):
        forecast = forecast_arrivals(approaching, steps, scenario.speed_mps) if steps else []
        action = controller.action(t, state, forecast)
        bad = legality.check_step(state, action, spec, table, step=t)
        if bad:
            raise LegalityAbort(
                f"illegal action at t={t}: " + "; ".join(str(v) for v in bad)
            )

        # Move approaching vehicles; those crossing the detector this second
        # become arrivals at the stop line.
        arrivals_now: list[list[Vehicle]] = [[] for _ in range(n)]
        for i in range(n):
            lane = approaching[i]
            moved = 0
            for veh in lane:
                veh.distance_m -= scenario.speed_mps
                if veh.distance_m <= 1e-9:
                    moved += 1
            for _ in range(moved):  # FIFO: earliest spawns sit at the front
                veh = lane.popleft()
                veh.arrive_s = t
                arrivals_now[i].append(veh)

        ca = tuple(len(arrivals_now[i]) for i in range(n))
        state = plant.step(state, action, ca, spec)
        if trace_hook is not None:
            trace_hook(t, state, action, ca)

        for i in range(n):
            if action.colors[i] is not LightColor.GREEN:
                stops_per_signal[i] += state.s[i]
                for veh in arrivals_now[i]:
                    veh.stopped = True
            # FIFO discharge: queued vehicles first, then this second's arrivals.
            for _ in range(state.f[i]):
                veh = queues[i].popleft() if queues[i] else arrivals_now[i].pop(0)
                veh.depart_s = t + 1
                exited.append(veh)
            queues[i].extend(arrivals_now[i])
            if len(queues[i]) != state.q[i]:
                raise AssertionError(
                    f"vehicle ledger and plant queue disagree at t={t}, signal {i}: "
                    f"{len(queues[i])} vs {state.q[i]}"
                )

        total_stops += sum(state.s)

        # End-of-second spawns begin moving next second.
        for i in range(n):
            if spawn_arrivals(rngs[i], scenario.demand[i]):
                spawned[i] += 1
                approaching[i].append(
                    Vehicle(signal=i, spawn_s=t + 1, distance_m=scenario.approach_length_m)
                )

    # Vehicles still in the system contribute their loss accrued so far, so a
    # controller cannot look good by stranding traffic at the horizon end.
    losses = [veh.depart_s - veh.spawn_s - free_flow_s for veh in exited]
    per_losses = [[] for _ in range(n)]
    for veh, loss in zip(exited, losses):
        per_losses[veh.signal].append(loss)
    per_exited = tuple(len(v) for v in per_losses)
    end_s = scenario.duration_s
    for lanes in (approaching, queues):
        for i in range(n):
            for veh in lanes[i]:
                loss = max(0.0, end_s - veh.spawn_s - free_flow_s)
                losses.append(loss)
                per_losses[veh.signal].append(loss)
    in_system = sum(len(a) for a in approaching) + sum(len(qd) for qd in queues)

    times = getattr(controller, "solve_times_s", [])
    nodes = getattr(controller, "nodes_explored", [])
    ms = [x * 1000.0 for x in times]
    return MetricsReport(
        duration_s=scenario.duration_s,
        seed=scenario.seed,
        vehicles_spawned=sum(spawned),
        vehicles_exited=len(exited),
        vehicles_in_system=in_system,
        avg_time_loss_s=fmean(losses) if losses else 0.0,
        p95_time_loss_s=percentile_95(losses),
        total_stops=total_stops,
        throughput_vph=len(exited) * 3600.0 / scenario.duration_s,
        per_signal_spawned=tuple(spawned),
        per_signal_exited=per_exited,
        per_signal_avg_time_loss_s=tuple(
            fmean(v) if v else 0.0 for v in per_losses
        ),
        per_signal_stops=tuple(stops_per_signal),
        final_queue=tuple(state.q),
        solves=len(times),
        mean_solve_ms=fmean(ms) if ms else 0.0,
        sd_solve_ms=stdev(ms) if len(ms) > 1 else 0.0,
        max_solve_ms=max(ms) if ms else 0.0,
        mean_nodes=fmean(nodes) if nodes else 0.0,
        all_proven_optimal=getattr(controller, "all_proven_optimal", True),
    )
