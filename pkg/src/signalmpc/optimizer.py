"""Receding-horizon schedule optimization by exact depth-first branch-and-bound.

All continuous plant quantities are forward recursions of the binary light
states, so instead of handing a monolithic program to an external solver the
search branches directly on per-step color choices, evaluates cost through the
plant recursion, and prunes with an admissible per-signal relaxation bound.
The milp module carries the equivalent explicit encoding for cross-checking.

The hot search loop is compiled (see _search); this module holds the problem
types, the public operations, and the pure-Python enumeration oracle that the
compiled search is validated against.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import product
from math import isfinite
from typing import Sequence

import numpy as np

from . import _search, legality, plant
from .plant import ArrivalVector, ControlAction, PlantState
from .topology import IntersectionSpec, LightColor


class OptimizerError(Exception):
    pass


class InfeasibleError(OptimizerError):
    """No legal schedule exists from the given state (defensive; unreachable
    from a legal state under a validated spec)."""


class ContinuationError(OptimizerError):
    """The forced continuation of a prefix is illegal."""


class EnumerationCapExceeded(OptimizerError):
    """enumerate_legal would exceed its node budget."""


@dataclass(frozen=True)
class ObjectiveWeights:
    """Per-unit costs of the stage objective; flow is rewarded (subtracted)."""

    queue: float = 1.0
    wait: float = 0.5
    stops: float = 1.0
    flow: float = 2.0
    not_green: float = 0.1

    def __post_init__(self):
        for name in ("queue", "wait", "stops", "flow", "not_green"):
            v = getattr(self, name)
            if not isfinite(v) or v < 0:
                raise ValueError(f"weight {name} must be finite and non-negative, got {v}")


DEFAULT_WEIGHTS = ObjectiveWeights()


@dataclass(frozen=True)
class MpcConfig:
    prediction_horizon: int
    control_horizon: int
    weights: ObjectiveWeights = DEFAULT_WEIGHTS
    time_limit: float | None = None  # seconds per solve
    node_limit: int | None = None

    def __post_init__(self):
        if not (1 <= self.control_horizon <= self.prediction_horizon):
            raise ValueError(
                f"need 1 <= control horizon <= prediction horizon, got "
                f"C={self.control_horizon}, P={self.prediction_horizon}"
            )


@dataclass(frozen=True)
class HorizonProblem:
    spec: IntersectionSpec
    initial: PlantState
    arrivals: tuple[ArrivalVector, ...]
    config: MpcConfig

    def __post_init__(self):
        if len(self.arrivals) != self.config.prediction_horizon:
            raise ValueError(
                f"need one arrival vector per prediction step, got "
                f"{len(self.arrivals)} for P={self.config.prediction_horizon}"
            )


@dataclass(frozen=True)
class Schedule:
    actions: tuple[ControlAction, ...]
    objective: float
    per_step_cost: tuple[float, ...]


@dataclass(frozen=True)
class SolveReport:
    schedule: Schedule
    nodes_explored: int
    wall_time: float
    proven_optimal: bool
    incumbent_history: tuple[tuple[float, float], ...]  # (elapsed s, objective)


def stage_cost(state: PlantState, arrivals: ArrivalVector, weights: ObjectiveWeights) -> float:
    """Weighted stage objective of a post-step state.

    The arrivals argument is accepted for call-site symmetry with the plant
    update; the state already reflects them.
    """
    sq = sum(state.q)
    stw = sum(state.t_w)
    ss = sum(state.s)
    sf = sum(state.f)
    sng = sum(1 for c in state.action.colors if c is not LightColor.GREEN)
    return (
        weights.queue * sq
        + weights.wait * stw
        + weights.stops * ss
        - weights.flow * sf
        + weights.not_green * sng
    )


def continuation_action(state: PlantState, spec: IntersectionSpec) -> ControlAction:
    """The single action the continuation policy takes from a state: yellow and
    amber run out their timed periods and take their forced successor, every
    other signal holds its color."""
    colors = []
    for i, c in enumerate(state.action.colors):
        if c is LightColor.YELLOW:
            colors.append(LightColor.YELLOW if state.t_y[i] < spec.yellow_period[i] else LightColor.RED)
        elif c is LightColor.AMBER:
            colors.append(LightColor.AMBER if state.t_a[i] < spec.amber_period[i] else LightColor.GREEN)
        else:
            colors.append(c)
    return ControlAction(colors=tuple(colors))


def continuation(
    actions_prefix: Sequence[ControlAction], problem: HorizonProblem
) -> tuple[ControlAction, ...]:
    """Extend a legal prefix to the full prediction horizon under the hold /
    complete-timed-transitions policy. Raises ContinuationError if the forced
    tail would be illegal (cannot happen for validated specs)."""
    spec = problem.spec
    P = problem.config.prediction_horizon
    if len(actions_prefix) > P:
        raise ValueError(f"prefix of length {len(actions_prefix)} exceeds horizon {P}")
    table = legality.derive_transitions(spec)
    state = problem.initial
    out = list(actions_prefix)
    for k, action in enumerate(actions_prefix):
        state = plant.step(state, action, problem.arrivals[k], spec)
    for k in range(len(actions_prefix), P):
        action = continuation_action(state, spec)
        bad = legality.check_step(state, action, spec, table, step=k)
        if bad:
            raise ContinuationError(
                "forced continuation is illegal: " + "; ".join(str(v) for v in bad)
            )
        out.append(action)
        state = plant.step(state, action, problem.arrivals[k], spec)
    return tuple(out)


# ---------------------------------------------------------------------------
# Compiled-search plumbing
# ---------------------------------------------------------------------------


def _problem_arrays(problem: HorizonProblem):
    spec = problem.spec
    n = spec.n
    conf = np.array(spec.conflict, dtype=np.int64).reshape(n, n)
    tji = np.array(spec.green_interval, dtype=np.int64).reshape(n, n)
    py = np.array(spec.yellow_period, dtype=np.int64)
    pa = np.array(spec.amber_period, dtype=np.int64)
    mg = np.array(spec.min_green, dtype=np.int64)
    fm = np.array(spec.max_flow, dtype=np.int64)
    arr = np.array(problem.arrivals, dtype=np.int64).reshape(
        problem.config.prediction_horizon, n
    )
    st = problem.initial
    root = tuple(
        np.array(v, dtype=np.int64)
        for v in (
            [int(c) for c in st.action.colors],
            st.q, st.t_g, st.t_y, st.t_a, st.t_ng, st.t_w,
        )
    )
    return conf, tji, py, pa, mg, fm, arr, root


def _to_actions(raw) -> tuple[ControlAction, ...]:
    return tuple(
        ControlAction(colors=tuple(LightColor(int(c)) for c in row)) for row in raw
    )


# Queue clamp for the group-pair serialized bound tables; clamping only
# weakens the bound, never its admissibility.
_PAIR_QCAP = 12


def _conflict_groups(spec: IntersectionSpec):
    """Deterministic side groups for the serialized bound tables.

    Each connected component of the conflict graph that is complete bipartite
    becomes one group pair (any member of side A serving blocks all of side B
    and vice versa); other components fall back to a greedy matching of
    singleton pairs; isolated signals stay unmatched. Returns membership
    masks and the clearance gaps: the minimum number of steps strictly
    between one side's last green and the other side's first green during
    which both sides are dark. The leaving signal's yellow blocks until it
    completes, the entering signal's amber (which also blocks) must run just
    before its green, and the green interval is checked against the
    not-green timer entering each green step; minimizing over cross pairs
    keeps the relaxation sound."""
    n = spec.n
    seen = [False] * n
    groups: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        side = {s: 0}
        frontier = [s]
        members = [s]
        bipartite = True
        while frontier:
            u = frontier.pop(0)
            for v in range(n):
                if v != u and spec.conflict[u][v]:
                    if v not in side:
                        side[v] = 1 - side[u]
                        seen[v] = True
                        frontier.append(v)
                        members.append(v)
                    elif side[v] == side[u]:
                        bipartite = False
        if len(members) == 1:
            continue
        a = tuple(sorted(v for v in members if side[v] == 0))
        b = tuple(sorted(v for v in members if side[v] == 1))
        complete = all(spec.conflict[x][y] for x in a for y in b)
        if bipartite and complete:
            groups.append((a, b))
        else:
            taken: set[int] = set()
            for i in sorted(members):
                if i in taken:
                    continue
                for j in sorted(members):
                    if j > i and j not in taken and spec.conflict[i][j]:
                        groups.append(((i,), (j,)))
                        taken |= {i, j}
                        break
    np_ = len(groups)
    gpa = np.zeros((np_, n), dtype=np.int64)
    gpb = np.zeros((np_, n), dtype=np.int64)
    gapab = np.ones(np_, dtype=np.int64)
    gapba = np.ones(np_, dtype=np.int64)
    for pp, (a, b) in enumerate(groups):
        for i in a:
            gpa[pp, i] = 1
        for j in b:
            gpb[pp, j] = 1
        gapab[pp] = min(
            max(spec.yellow_period[x] + spec.amber_period[y],
                spec.green_interval[x][y])
            for x in a
            for y in b
        )
        gapba[pp] = min(
            max(spec.yellow_period[y] + spec.amber_period[x],
                spec.green_interval[y][x])
            for x in a
            for y in b
        )
    return gpa, gpb, gapab, gapba


def solve(problem: HorizonProblem, warm_actions: Sequence[ControlAction] | None = None) -> SolveReport:
    """Exact minimization of the horizon objective over all legal schedules
    reachable through the control horizon plus forced continuation.

    Deterministic: among equal-objective schedules the lexicographically
    smallest wins, comparing colors Green < Yellow < Amber < Red signal-major
    then step-major. A warm start only changes exploration effort, never the
    returned schedule.
    """
    cfg = problem.config
    n = problem.spec.n
    P = cfg.prediction_horizon
    conf, tji, py, pa, mg, fm, arr, root = _problem_arrays(problem)
    gpa, gpb, gapab, gapba = _conflict_groups(problem.spec)

    if warm_actions is not None and len(warm_actions) > 0:
        warm = np.array(
            [[int(c) for c in a.colors] for a in warm_actions[:P]], dtype=np.int64
        )
        warm_len = warm.shape[0]
    else:
        warm = np.zeros((0, n), dtype=np.int64)
        warm_len = 0

    best_act = np.zeros((P, n), dtype=np.int64)
    imp_nodes = np.zeros(_search._IMP_CAP, dtype=np.int64)
    imp_objs = np.zeros(_search._IMP_CAP, dtype=np.float64)
    imp_times = np.zeros(_search._IMP_CAP, dtype=np.float64)

    t0 = time.perf_counter()
    found, best_obj, nodes, limit_hit, n_imp = _search.search(
        n, P, cfg.control_horizon, conf, tji, py, pa, mg, fm, arr,
        gpa, gpb, gapab, gapba, _PAIR_QCAP,
        float(cfg.weights.queue), float(cfg.weights.wait),
        float(cfg.weights.stops), float(cfg.weights.flow),
        float(cfg.weights.not_green),
        root[0], root[1], root[2], root[3], root[4], root[5], root[6],
        warm, warm_len,
        -1 if cfg.node_limit is None else int(cfg.node_limit),
        -1.0 if cfg.time_limit is None else float(cfg.time_limit),
        t0,
        best_act, imp_nodes, imp_objs, imp_times,
    )
    wall = time.perf_counter() - t0

    if not found:
        if limit_hit:
            raise OptimizerError("search limit reached before any legal schedule was found")
        raise InfeasibleError("no legal schedule exists from this state")

    actions = _to_actions(best_act)

    # Replay the winner through the public plant for the per-step breakdown;
    # the accumulation order matches the compiled search exactly, so the totals
    # must agree bit for bit.
    state = problem.initial
    per_step = []
    total = 0.0
    for k, action in enumerate(actions):
        state = plant.step(state, action, problem.arrivals[k], problem.spec)
        c = stage_cost(state, problem.arrivals[k], cfg.weights)
        per_step.append(c)
        total = total + c
    if total != best_obj:
        raise OptimizerError(
            f"internal cost mismatch: replay {total!r} vs search {best_obj!r}"
        )

    bad = legality.check_schedule(problem.initial, actions, problem.arrivals, problem.spec)
    if bad:
        raise OptimizerError(
            "solver produced an illegal schedule: " + "; ".join(str(v) for v in bad)
        )

    history = tuple(
        (max(0.0, float(imp_times[i]) - t0), float(imp_objs[i])) for i in range(n_imp)
    )
    schedule = Schedule(actions=actions, objective=best_obj, per_step_cost=tuple(per_step))
    return SolveReport(
        schedule=schedule,
        nodes_explored=int(nodes),
        wall_time=wall,
        proven_optimal=not bool(limit_hit),
        incumbent_history=history,
    )


def lower_bound(
    state: PlantState,
    remaining_arrivals: Sequence[ArrivalVector],
    weights: ObjectiveWeights,
    spec: IntersectionSpec,
) -> float:
    """Admissible lower bound on the cost-to-go from a state: never exceeds the
    total stage cost of any legal completion over the remaining steps.

    Relaxation: every signal is allowed to run green on every remaining step,
    so each drains its own backlog at ``max_flow`` per step and earns the flow
    reward; the queue, wait, stop, and not-green terms are each bounded below
    by zero and dropped.  (The compiled search uses a much tighter internal
    bound; this one is the simple reference form.)
    """
    total = 0.0
    for i in range(spec.n):
        qi = state.q[i]
        fmi = spec.max_flow[i]
        for arrivals in remaining_arrivals:
            fi = min(fmi, qi + arrivals[i])
            qi = qi + arrivals[i] - fi
            total -= weights.flow * fi
    return total


def enumerate_legal(problem: HorizonProblem, node_cap: int = 500_000) -> tuple[float | None, int]:
    """Brute-force oracle: walk every legal schedule of the problem using only
    the public plant step and legality checks, honoring the control horizon via
    an inline restatement of the continuation policy.

    Returns (best objective or None if nothing is legal, count of complete
    legal schedules). Raises EnumerationCapExceeded past the node budget.
    """
    spec = problem.spec
    cfg = problem.config
    P, C = cfg.prediction_horizon, cfg.control_horizon
    table = legality.derive_transitions(spec)
    per_signal_colors = [
        [tuple(c for c in LightColor if table.permits(i, prev, c)) for prev in LightColor]
        for i in range(spec.n)
    ]

    best: float | None = None
    count = 0
    nodes = 0

    def forced(state: PlantState) -> ControlAction:
        colors = []
        for i, c in enumerate(state.action.colors):
            if c is LightColor.YELLOW and state.t_y[i] < spec.yellow_period[i]:
                colors.append(LightColor.YELLOW)
            elif c is LightColor.YELLOW:
                colors.append(LightColor.RED)
            elif c is LightColor.AMBER and state.t_a[i] < spec.amber_period[i]:
                colors.append(LightColor.AMBER)
            elif c is LightColor.AMBER:
                colors.append(LightColor.GREEN)
            else:
                colors.append(c)
        return ControlAction(colors=tuple(colors))

    def walk(k: int, state: PlantState, cost: float) -> None:
        nonlocal best, count, nodes
        if k == P:
            count += 1
            if best is None or cost < best:
                best = cost
            return
        nodes += 1
        if nodes > node_cap:
            raise EnumerationCapExceeded(f"enumeration exceeded {node_cap} nodes")
        if k < C:
            options = [per_signal_colors[i][state.action.colors[i]] for i in range(spec.n)]
            candidates = [ControlAction(colors=combo) for combo in product(*options)]
        else:
            candidates = [forced(state)]
        for action in candidates:
            if legality.check_step(state, action, spec, table, step=k):
                continue
            nxt = plant.step(state, action, problem.arrivals[k], spec)
            walk(k + 1, nxt, cost + stage_cost(nxt, problem.arrivals[k], cfg.weights))

    walk(0, problem.initial, 0.0)
    return best, count


def mpc_step(
    current: PlantState,
    forecast: Sequence[ArrivalVector],
    config: MpcConfig,
    spec: IntersectionSpec,
    warm: Schedule | None = None,
) -> tuple[ControlAction, SolveReport]:
    """One receding-horizon iteration: solve the horizon problem from the
    current state and return only the first action for actuation.

    A warm start is the previous schedule shifted by one step; it is validated
    before use and affects effort only, not the result.
    """
    P = config.prediction_horizon
    n = spec.n
    padded = [tuple(v) for v in forecast[:P]]
    while len(padded) < P:
        padded.append((0,) * n)
    problem = HorizonProblem(spec=spec, initial=current, arrivals=tuple(padded), config=config)
    warm_actions = warm.actions[1:] if warm is not None else None
    report = solve(problem, warm_actions=warm_actions)
    return report.schedule.actions[0], report
