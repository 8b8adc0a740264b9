"""Independent verifier for the traffic-law constraints.

All per-step checks take the previous plant state and the proposed next action,
so the verifier re-derives every timer itself when walking a schedule instead
of trusting whatever produced it. The optimizer must never emit anything this
module rejects; that property is the platform's audit trail.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from . import plant
from .plant import ArrivalVector, ControlAction, PlantState
from .topology import IntersectionSpec, LightColor, TransitionTable, derive_transitions


class ConstraintKind(Enum):
    SINGLE_LIGHT = "SingleLight"
    CONFLICT = "Conflict"
    TRANSITION = "Transition"
    YELLOW_TIMING = "YellowTiming"
    AMBER_TIMING = "AmberTiming"
    GREEN_INTERVAL = "GreenInterval"
    MIN_GREEN = "MinGreen"


@dataclass(frozen=True)
class Violation:
    step: int
    kind: ConstraintKind
    signals: tuple[int, ...]
    message: str

    def __str__(self) -> str:
        where = ",".join(str(i) for i in self.signals)
        return f"step {self.step}: {self.kind.value} on signal(s) {where}: {self.message}"


def check_single_light(
    delta_g: Sequence[int],
    delta_y: Sequence[int],
    delta_a: Sequence[int],
    delta_r: Sequence[int],
    step: int = 0,
) -> list[Violation]:
    """Each signal must show exactly one light.

    A ControlAction satisfies this by construction; this check exists for raw
    one-hot vectors coming from outside, e.g. a parsed MILP solution.
    """
    out = []
    for i, (g, y, a, r) in enumerate(zip(delta_g, delta_y, delta_a, delta_r, strict=True)):
        total = g + y + a + r
        if total != 1:
            out.append(
                Violation(step, ConstraintKind.SINGLE_LIGHT, (i,), f"color indicators sum to {total}, not 1")
            )
    return out


def check_conflict(action: ControlAction, spec: IntersectionSpec, step: int = 0) -> list[Violation]:
    """No conflicting pair may be simultaneously blocking (green, yellow, or amber)."""
    out = []
    colors = action.colors
    for i, j in spec.conflicting_pairs():
        if colors[i].is_blocking() and colors[j].is_blocking():
            out.append(
                Violation(
                    step,
                    ConstraintKind.CONFLICT,
                    (i, j),
                    f"{colors[i].name} and {colors[j].name} both occupy the conflict area",
                )
            )
    return out


def check_transition(
    prev: ControlAction, nxt: ControlAction, table: TransitionTable, step: int = 0
) -> list[Violation]:
    """Every per-signal color hop must be in the jurisdiction's transition table."""
    out = []
    for i, (p, q) in enumerate(zip(prev.colors, nxt.colors, strict=True)):
        if not table.permits(i, p, q):
            out.append(
                Violation(step, ConstraintKind.TRANSITION, (i,), f"{p.name} -> {q.name} is not a permitted hop")
            )
    return out


def check_timed_color(
    prev_state: PlantState,
    nxt: ControlAction,
    spec: IntersectionSpec,
    color: LightColor,
    step: int = 0,
) -> list[Violation]:
    """Yellow and amber are held for exactly their configured period: leaving
    early and overstaying are both violations."""
    if color is LightColor.YELLOW:
        periods = spec.yellow_period
        kind = ConstraintKind.YELLOW_TIMING
        timers = prev_state.t_y
    elif color is LightColor.AMBER:
        periods = spec.amber_period
        kind = ConstraintKind.AMBER_TIMING
        timers = prev_state.t_a
    else:
        raise ValueError(f"only yellow and amber are precisely timed, not {color.name}")

    out = []
    for i in range(spec.n):
        was = prev_state.action.colors[i] is color
        stays = nxt.colors[i] is color
        if was and not stays and timers[i] < periods[i]:
            out.append(
                Violation(step, kind, (i,), f"left {color.name} after {timers[i]}s, period is {periods[i]}s")
            )
        if stays and timers[i] + 1 > periods[i]:
            out.append(
                Violation(step, kind, (i,), f"holding {color.name} to {timers[i] + 1}s exceeds period {periods[i]}s")
            )
    return out


def check_green_interval(
    prev_state: PlantState, nxt: ControlAction, spec: IntersectionSpec, step: int = 0
) -> list[Violation]:
    """A signal may only show green once every cross-constrained signal has been
    not-green for at least the configured interval."""
    out = []
    for j in range(spec.n):
        if nxt.colors[j] is not LightColor.GREEN:
            continue
        for i in range(spec.n):
            if i == j:
                continue
            need = spec.green_interval[i][j]
            if need > prev_state.t_ng[i]:
                out.append(
                    Violation(
                        step,
                        ConstraintKind.GREEN_INTERVAL,
                        (i, j),
                        f"green on {j} needs {need}s of not-green on {i}, has {prev_state.t_ng[i]}s",
                    )
                )
    return out


def check_min_green(
    prev_state: PlantState, nxt: ControlAction, spec: IntersectionSpec, step: int = 0
) -> list[Violation]:
    """A green phase may not end before the minimum green time has elapsed."""
    out = []
    for i in range(spec.n):
        if (
            prev_state.action.colors[i] is LightColor.GREEN
            and nxt.colors[i] is not LightColor.GREEN
            and prev_state.t_g[i] < spec.min_green[i]
        ):
            out.append(
                Violation(
                    step,
                    ConstraintKind.MIN_GREEN,
                    (i,),
                    f"green ended after {prev_state.t_g[i]}s, minimum is {spec.min_green[i]}s",
                )
            )
    return out


def check_step(
    prev_state: PlantState,
    nxt: ControlAction,
    spec: IntersectionSpec,
    table: TransitionTable,
    step: int = 0,
) -> list[Violation]:
    """Union of all per-step checks for one action from a known state."""
    out: list[Violation] = []
    out += check_conflict(nxt, spec, step)
    out += check_transition(prev_state.action, nxt, table, step)
    out += check_timed_color(prev_state, nxt, spec, LightColor.YELLOW, step)
    out += check_timed_color(prev_state, nxt, spec, LightColor.AMBER, step)
    out += check_green_interval(prev_state, nxt, spec, step)
    out += check_min_green(prev_state, nxt, spec, step)
    return out


def check_schedule(
    initial: PlantState,
    schedule: Sequence[ControlAction],
    arrivals: Sequence[ArrivalVector],
    spec: IntersectionSpec,
) -> list[Violation]:
    """Roll the plant forward from the initial state and collect every violation.

    Violations are gathered exhaustively rather than short-circuiting, so a bad
    schedule reports everything wrong with it in one pass.
    """
    if len(schedule) != len(arrivals):
        raise ValueError(
            f"schedule has {len(schedule)} actions but {len(arrivals)} arrival vectors"
        )
    table = derive_transitions(spec)
    out: list[Violation] = []
    state = initial
    for k, (action, ca) in enumerate(zip(schedule, arrivals)):
        out += check_step(state, action, spec, table, step=k)
        state = plant.step(state, action, ca, spec)
    return out
