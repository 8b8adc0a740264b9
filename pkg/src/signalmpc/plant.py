"""Discrete-time plant dynamics for one intersection.

All state variables are whole vehicles and whole seconds on a fixed 1 s step.
Each update is a pure function; the simulator and the optimizer both drive the
same arithmetic, and the legality checker replays it independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .topology import IntersectionSpec, LightColor

ArrivalVector = tuple[int, ...]
# Vehicles reaching the stop line this second, one count per signal.


@dataclass(frozen=True)
class ControlAction:
    """One color per signal. The one-hot delta vectors of the model are implied
    by construction, so "exactly one light per signal" cannot be violated here."""

    colors: tuple[LightColor, ...]

    def __post_init__(self):
        object.__setattr__(self, "colors", tuple(LightColor(c) for c in self.colors))

    @classmethod
    def all_red(cls, n: int) -> "ControlAction":
        return cls(colors=(LightColor.RED,) * n)

    @classmethod
    def from_letters(cls, letters: str) -> "ControlAction":
        """Parse e.g. "GGRR" or "G G R R" (one letter per signal)."""
        codes = letters.split() if " " in letters.strip() else list(letters.strip())
        return cls(colors=tuple(LightColor.from_letter(c) for c in codes))

    def to_letters(self, sep: str = " ") -> str:
        return sep.join(c.letter for c in self.colors)

    @property
    def n(self) -> int:
        return len(self.colors)

    def green_mask(self) -> tuple[int, ...]:
        return tuple(1 if c is LightColor.GREEN else 0 for c in self.colors)


@dataclass(frozen=True)
class PlantState:
    """Per-signal dynamic state: current colors, queue lengths, and timers.

    ``f`` and ``s`` record the previous step's flow and stops so that stage
    costs can be evaluated from the state alone.
    """

    action: ControlAction
    q: tuple[int, ...]     # queued vehicles
    t_g: tuple[int, ...]   # consecutive seconds of green
    t_y: tuple[int, ...]   # consecutive seconds of yellow
    t_a: tuple[int, ...]   # consecutive seconds of amber
    t_ng: tuple[int, ...]  # consecutive seconds of not-green
    t_w: tuple[int, ...]   # consecutive seconds a nonempty queue has waited at a non-green light
    f: tuple[int, ...]     # vehicles discharged last step
    s: tuple[int, ...]     # vehicles that arrived at a non-green light last step

    @property
    def n(self) -> int:
        return len(self.q)


def initial_state(spec: IntersectionSpec) -> PlantState:
    """Canonical start: everything red and empty, with the not-green timers
    pre-aged past the largest green interval so the first green is unblocked."""
    n = spec.n
    zeros = (0,) * n
    aged = max((v for row in spec.green_interval for v in row), default=0)
    return PlantState(
        action=ControlAction.all_red(n),
        q=zeros,
        t_g=zeros,
        t_y=zeros,
        t_a=zeros,
        t_ng=(aged,) * n,
        t_w=zeros,
        f=zeros,
        s=zeros,
    )


def _check_dim(name: str, v: Sequence, n: int) -> None:
    if len(v) != n:
        raise ValueError(f"{name}: expected length {n}, got {len(v)}")


def flow(
    action: ControlAction,
    q_prev: Sequence[int],
    arrivals: Sequence[int],
    spec: IntersectionSpec,
) -> tuple[int, ...]:
    """Vehicles passing the stop line this second: capped by capacity, zero
    unless green, and never more than the waiting plus arriving demand."""
    n = spec.n
    _check_dim("q_prev", q_prev, n)
    _check_dim("arrivals", arrivals, n)
    out = []
    for i in range(n):
        if action.colors[i] is LightColor.GREEN:
            out.append(min(spec.max_flow[i], arrivals[i] + q_prev[i]))
        else:
            out.append(0)
    return tuple(out)


def queue_update(
    q_prev: Sequence[int], arrivals: Sequence[int], f: Sequence[int]
) -> tuple[int, ...]:
    """Queue balance: previous queue plus arrivals minus discharge."""
    out = []
    for qp, ca, fi in zip(q_prev, arrivals, f, strict=True):
        q = qp + ca - fi
        if q < 0:
            raise ValueError(f"queue would go negative ({qp} + {ca} - {fi})")
        out.append(q)
    return tuple(out)


def timer_update(
    state_prev: PlantState, action: ControlAction
) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Advance the four color timers: each counts consecutive seconds in its
    color (not-green for t_ng) and resets to zero the second the color leaves."""
    t_g, t_y, t_a, t_ng = [], [], [], []
    for i, c in enumerate(action.colors):
        t_g.append(state_prev.t_g[i] + 1 if c is LightColor.GREEN else 0)
        t_y.append(state_prev.t_y[i] + 1 if c is LightColor.YELLOW else 0)
        t_a.append(state_prev.t_a[i] + 1 if c is LightColor.AMBER else 0)
        t_ng.append(0 if c is LightColor.GREEN else state_prev.t_ng[i] + 1)
    return tuple(t_g), tuple(t_y), tuple(t_a), tuple(t_ng)


def wait_update(
    t_w_prev: Sequence[int], action: ControlAction, q: Sequence[int]
) -> tuple[int, ...]:
    """Wait timer: counts up while a signal is not green and vehicles are queued
    (judged on this step's post-discharge queue), resets otherwise."""
    out = []
    for tw, c, qi in zip(t_w_prev, action.colors, q, strict=True):
        out.append(tw + 1 if (c is not LightColor.GREEN and qi >= 1) else 0)
    return tuple(out)


def stops(action: ControlAction, arrivals: Sequence[int]) -> tuple[int, ...]:
    """Arrivals that meet a non-green light count as stops."""
    return tuple(
        ca if c is not LightColor.GREEN else 0
        for c, ca in zip(action.colors, arrivals, strict=True)
    )


def step(
    state_prev: PlantState,
    action: ControlAction,
    arrivals: Sequence[int],
    spec: IntersectionSpec,
) -> PlantState:
    """One second of plant evolution under the given action and arrivals.

    Legality of the action is deliberately not checked here; the legality
    module owns that judgement.
    """
    f = flow(action, state_prev.q, arrivals, spec)
    q = queue_update(state_prev.q, arrivals, f)
    t_g, t_y, t_a, t_ng = timer_update(state_prev, action)
    t_w = wait_update(state_prev.t_w, action, q)
    s = stops(action, arrivals)
    return PlantState(
        action=action, q=q, t_g=t_g, t_y=t_y, t_a=t_a, t_ng=t_ng, t_w=t_w, f=f, s=s
    )
