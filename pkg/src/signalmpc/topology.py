"""Intersection topology: signals, conflict structure, and jurisdictional transition rules.

Everything in this module is static configuration. Specs are validated once and
then treated as immutable; all downstream modules assume a spec that passed
:func:`validate_spec`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence


class LightColor(IntEnum):
    """Signal head color.

    The integer values double as the preference rank used for deterministic
    tie-breaking in the optimizer (Green < Yellow < Amber < Red).
    """

    GREEN = 0
    YELLOW = 1
    AMBER = 2  # European red+yellow pre-green state; unreachable when the amber period is 0
    RED = 3

    @property
    def letter(self) -> str:
        return "GYAR"[self]

    @classmethod
    def from_letter(cls, letter: str) -> "LightColor":
        try:
            return _BY_LETTER[letter.upper()]
        except KeyError:
            raise ValueError(f"unknown color code {letter!r} (expected one of G, Y, A, R)") from None

    def is_blocking(self) -> bool:
        """Whether vehicles may legitimately occupy the conflict area in this state."""
        return self is not LightColor.RED


_BY_LETTER = {c.letter: c for c in LightColor}


def _as_matrix(rows: Iterable[Iterable[int]]) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in row) for row in rows)


def _as_vector(values: Iterable[int]) -> tuple[int, ...]:
    return tuple(int(v) for v in values)


@dataclass(frozen=True)
class IntersectionSpec:
    """Static description of one intersection and its safety law parameters.

    A "signal" is one independently controlled light; it may serve several
    parallel lanes. All durations are whole seconds, all flows whole vehicles
    per second. ``conflict[i][j] = 1`` marks a pair whose movements cross and
    must never be simultaneously blocking-active. ``green_interval[i][j]`` is
    how long signal ``i`` must have been not-green before ``j`` may show green;
    it may be asymmetric.
    """

    n: int
    conflict: tuple[tuple[int, ...], ...]
    green_interval: tuple[tuple[int, ...], ...]
    yellow_period: tuple[int, ...]
    amber_period: tuple[int, ...]
    min_green: tuple[int, ...]
    max_flow: tuple[int, ...]
    labels: tuple[str, ...]

    @classmethod
    def create(
        cls,
        conflict: Sequence[Sequence[int]],
        green_interval: Sequence[Sequence[int]],
        yellow_period: Sequence[int],
        amber_period: Sequence[int],
        min_green: Sequence[int],
        max_flow: Sequence[int],
        labels: Sequence[str] | None = None,
    ) -> "IntersectionSpec":
        """Build a spec from plain sequences, defaulting labels to s0..s{n-1}."""
        n = len(yellow_period)
        if labels is None:
            labels = [f"s{i}" for i in range(n)]
        return cls(
            n=n,
            conflict=_as_matrix(conflict),
            green_interval=_as_matrix(green_interval),
            yellow_period=_as_vector(yellow_period),
            amber_period=_as_vector(amber_period),
            min_green=_as_vector(min_green),
            max_flow=_as_vector(max_flow),
            labels=tuple(str(s) for s in labels),
        )

    def conflicting_pairs(self) -> list[tuple[int, int]]:
        """Unordered conflicting pairs (i, j) with i < j."""
        return [
            (i, j)
            for i in range(self.n)
            for j in range(i + 1, self.n)
            if self.conflict[i][j]
        ]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "labels": list(self.labels),
            "conflict": [list(r) for r in self.conflict],
            "green_interval": [list(r) for r in self.green_interval],
            "yellow_period": list(self.yellow_period),
            "amber_period": list(self.amber_period),
            "min_green": list(self.min_green),
            "max_flow": list(self.max_flow),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IntersectionSpec":
        try:
            yellow = _as_vector(data["yellow_period"])
            n = int(data.get("n", len(yellow)))
            spec = cls(
                n=n,
                conflict=_as_matrix(data["conflict"]),
                green_interval=_as_matrix(data["green_interval"]),
                yellow_period=yellow,
                amber_period=_as_vector(data["amber_period"]),
                min_green=_as_vector(data["min_green"]),
                max_flow=_as_vector(data["max_flow"]),
                labels=tuple(str(s) for s in data.get("labels", [f"s{i}" for i in range(n)])),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed intersection layout: {exc}") from exc
        return spec


@dataclass(frozen=True)
class TransitionTable:
    """Per-signal sets of allowed (previous color -> next color) pairs.

    The table covers only which hops are ever permitted; how long a state must
    be held before hopping is the legality module's business. Self-loops are
    always in the table for the same reason.
    """

    allowed: tuple[frozenset[tuple[LightColor, LightColor]], ...]

    def permits(self, signal: int, prev: LightColor, nxt: LightColor) -> bool:
        return (prev, nxt) in self.allowed[signal]

    def blocked_pairs(self, signal: int) -> list[tuple[LightColor, LightColor]]:
        """Ordered color pairs this signal may never perform, in a stable order."""
        return [
            (p, q)
            for p in LightColor
            for q in LightColor
            if (p, q) not in self.allowed[signal]
        ]


# Non-self hops of the two jurisdictional cycles. US-style signals skip amber
# entirely; European-style signals must pass through it on the way to green.
_CYCLE_NO_AMBER = (
    (LightColor.RED, LightColor.GREEN),
    (LightColor.GREEN, LightColor.YELLOW),
    (LightColor.YELLOW, LightColor.RED),
)
_CYCLE_WITH_AMBER = (
    (LightColor.RED, LightColor.AMBER),
    (LightColor.AMBER, LightColor.GREEN),
    (LightColor.GREEN, LightColor.YELLOW),
    (LightColor.YELLOW, LightColor.RED),
)
_SELF_LOOPS = tuple((c, c) for c in LightColor)


def derive_transitions(spec: IntersectionSpec) -> TransitionTable:
    """Build the allowed-transition table; a function of the amber periods only."""
    per_signal = []
    for i in range(spec.n):
        cycle = _CYCLE_WITH_AMBER if spec.amber_period[i] > 0 else _CYCLE_NO_AMBER
        per_signal.append(frozenset(_SELF_LOOPS + cycle))
    return TransitionTable(allowed=tuple(per_signal))


def validate_spec(spec: IntersectionSpec) -> list[str]:
    """Check every structural invariant; returns a list of violations (empty = ok)."""
    problems: list[str] = []
    n = spec.n

    def shape(name: str, mat: tuple[tuple[int, ...], ...]) -> bool:
        if len(mat) != n or any(len(row) != n for row in mat):
            problems.append(f"{name}: expected {n}x{n} matrix")
            return False
        return True

    def vec(name: str, v: tuple[int, ...]) -> bool:
        if len(v) != n:
            problems.append(f"{name}: expected length {n}, got {len(v)}")
            return False
        return True

    if n < 1:
        problems.append("n: need at least one signal")
        return problems

    conflict_ok = shape("conflict", spec.conflict)
    interval_ok = shape("green_interval", spec.green_interval)
    for name, v in (
        ("yellow_period", spec.yellow_period),
        ("amber_period", spec.amber_period),
        ("min_green", spec.min_green),
        ("max_flow", spec.max_flow),
    ):
        vec(name, v)
    if len(spec.labels) != n:
        problems.append(f"labels: expected {n} labels, got {len(spec.labels)}")

    if conflict_ok:
        for i in range(n):
            if spec.conflict[i][i] != 0:
                problems.append(f"conflict[{i}][{i}]: diagonal must be zero")
            for j in range(n):
                if spec.conflict[i][j] not in (0, 1):
                    problems.append(f"conflict[{i}][{j}]: entries must be 0 or 1")
                elif j > i and spec.conflict[i][j] != spec.conflict[j][i]:
                    problems.append(f"conflict[{i}][{j}]: matrix must be symmetric")

    if interval_ok:
        for i in range(n):
            for j in range(n):
                v = spec.green_interval[i][j]
                if v < 0:
                    problems.append(f"green_interval[{i}][{j}]: must be non-negative")
                if i == j and v != 0:
                    problems.append(f"green_interval[{i}][{j}]: diagonal must be zero")
        if conflict_ok:
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    if spec.conflict[i][j] and spec.green_interval[i][j] <= 0:
                        problems.append(
                            f"green_interval[{i}][{j}]: conflicting pair needs positive interval"
                        )
                    if not spec.conflict[i][j] and spec.green_interval[i][j] != 0:
                        problems.append(
                            f"green_interval[{i}][{j}]: non-conflicting pair must have zero interval"
                        )

    if len(spec.yellow_period) == n:
        for i, v in enumerate(spec.yellow_period):
            if v < 1:
                problems.append(f"yellow_period[{i}]: must be at least 1 second")
    if len(spec.amber_period) == n:
        for i, v in enumerate(spec.amber_period):
            if v < 0:
                problems.append(f"amber_period[{i}]: must be non-negative")
    if len(spec.min_green) == n:
        for i, v in enumerate(spec.min_green):
            if v < 0:
                problems.append(f"min_green[{i}]: must be non-negative")
    if len(spec.max_flow) == n:
        for i, v in enumerate(spec.max_flow):
            if v < 1:
                problems.append(f"max_flow[{i}]: must be a positive vehicle rate")

    return problems


def require_valid(spec: IntersectionSpec) -> IntersectionSpec:
    """Raise ValueError listing all violations unless the spec validates clean."""
    problems = validate_spec(spec)
    if problems:
        raise ValueError("invalid intersection spec:\n  " + "\n  ".join(problems))
    return spec


# Signal order used by the built-in 4-way intersection.
FOURWAY_LABELS = ("N", "S", "E", "W")


def builtin_fourway(max_flow: int = 1) -> IntersectionSpec:
    """The symmetric 4-way intersection: US-style cycle, 4 s yellow, 6 s
    minimum green, 6 s green interval between crossing approaches.

    North/South run parallel and do not cross each other; likewise East/West.
    The flow capacity is not part of the published parameter set and defaults
    to 1 vehicle/s per signal.
    """
    cross = [[0, 0, 1, 1], [0, 0, 1, 1], [1, 1, 0, 0], [1, 1, 0, 0]]
    interval = [[6 * c for c in row] for row in cross]
    return require_valid(
        IntersectionSpec.create(
            conflict=cross,
            green_interval=interval,
            yellow_period=[4, 4, 4, 4],
            amber_period=[0, 0, 0, 0],
            min_green=[6, 6, 6, 6],
            max_flow=[max_flow] * 4,
            labels=FOURWAY_LABELS,
        )
    )


def load_spec(path: str | Path) -> IntersectionSpec:
    """Read an intersection spec from its JSON file form and validate it."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return require_valid(IntersectionSpec.from_dict(data))


def save_spec(spec: IntersectionSpec, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")
