"""Explicit mixed-integer encoding of the horizon problem.

This is the second, independent route to the optimum: every plant recursion and
legality rule becomes a linear row over binary light states and integer
queue/timer variables, with products linearized through big-M rows whose
constants are derived per instance (initial state plus total arrivals), never
guessed globally. Models export to CPLEX LP text for standard solvers, and
`evaluate_assignment` lets tests check hand-rolled or search-produced
assignments row by row without any solver dependency.

Variable naming is positional and stable: `d_g_<signal>_<step>` etc., with
0-based signal and step indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO
from pathlib import Path
from typing import Mapping, Sequence

from . import plant
from .optimizer import HorizonProblem
from .plant import ControlAction
from .topology import LightColor, derive_transitions

_SENSES = ("<=", ">=", "=")


@dataclass(frozen=True)
class MilpVar:
    name: str
    kind: str  # "binary" | "integer"
    lb: int
    ub: int


@dataclass(frozen=True)
class MilpRow:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str
    rhs: float


@dataclass(frozen=True)
class MilpModel:
    name: str
    n: int
    prediction_horizon: int
    control_horizon: int
    variables: tuple[MilpVar, ...]
    rows: tuple[MilpRow, ...]
    objective: tuple[tuple[str, float], ...]
    objective_constant: float

    def variable_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)


_DELTA = {
    LightColor.GREEN: "d_g",
    LightColor.YELLOW: "d_y",
    LightColor.AMBER: "d_a",
    LightColor.RED: "d_r",
}


class _Builder:
    def __init__(self):
        self.variables: list[MilpVar] = []
        self.rows: list[MilpRow] = []

    def var(self, name, kind, lb, ub):
        self.variables.append(MilpVar(name, kind, lb, ub))
        return name

    def row(self, name, sense, rhs, *terms):
        """Add a row from (coefficient, variable-name-or-constant) terms;
        constants fold into the right-hand side. All-constant rows are verified
        and dropped."""
        coeffs: dict[str, float] = {}
        const = 0.0
        for coef, t in terms:
            if isinstance(t, str):
                coeffs[t] = coeffs.get(t, 0.0) + coef
            else:
                const += coef * t
        rhs = rhs - const
        items = tuple((v, c) for v, c in coeffs.items() if c != 0.0)
        if not items:
            sat = (
                (sense == "<=" and 0.0 <= rhs + 1e-9)
                or (sense == ">=" and 0.0 >= rhs - 1e-9)
                or (sense == "=" and abs(rhs) <= 1e-9)
            )
            if not sat:
                raise ValueError(f"row {name} is constant and violated (rhs {rhs})")
            return
        self.rows.append(MilpRow(name, items, sense, rhs))


def encode(problem: HorizonProblem) -> MilpModel:
    """Translate a horizon problem into an equivalent mixed-integer model whose
    optimum matches the search optimum on the same problem."""
    spec = problem.spec
    cfg = problem.config
    n, P, C = spec.n, cfg.prediction_horizon, cfg.control_horizon
    arr = problem.arrivals
    w = cfg.weights
    table = derive_transitions(spec)
    init = problem.initial
    c0 = init.action.colors

    # Per-signal big-M constants, tight for this instance.
    mq = [max(1, init.q[i] + sum(arr[k][i] for k in range(P))) for i in range(n)]
    # The flow-selector rows need a constant that also dominates the
    # saturation rate, or an inactive side could still bind when max_flow
    # exceeds every reachable queue.
    mf = [max(mq[i], spec.max_flow[i]) for i in range(n)]
    mtg = [init.t_g[i] + P for i in range(n)]
    mng = [init.t_ng[i] + P for i in range(n)]
    mtw = [init.t_w[i] + P for i in range(n)]

    b = _Builder()

    def vn(prefix, i, k):
        return f"{prefix}_{i}_{k}"

    # Previous-step terms: variables for k >= 1, initial-state constants at k=0.
    def p_delta(color, i, k):
        if k == 0:
            return 1 if c0[i] is color else 0
        return vn(_DELTA[color], i, k - 1)

    def p_timer(prefix, values, i, k):
        return values[i] if k == 0 else vn(prefix, i, k - 1)

    # Declare variables step-major so the LP reads chronologically.
    for k in range(P):
        for i in range(n):
            for prefix in ("d_g", "d_y", "d_a", "d_r"):
                b.var(vn(prefix, i, k), "binary", 0, 1)
            b.var(vn("m", i, k), "binary", 0, 1)
            b.var(vn("z", i, k), "binary", 0, 1)
            b.var(vn("f", i, k), "integer", 0, spec.max_flow[i])
            b.var(vn("q", i, k), "integer", 0, mq[i])
            b.var(vn("tg", i, k), "integer", 0, mtg[i])
            b.var(vn("ty", i, k), "integer", 0, spec.yellow_period[i])
            b.var(vn("ta", i, k), "integer", 0, spec.amber_period[i])
            b.var(vn("tng", i, k), "integer", 0, mng[i])
            b.var(vn("tw", i, k), "integer", 0, mtw[i])
            b.var(vn("s", i, k), "integer", 0, arr[k][i])

    for k in range(P):
        # Exactly one light per signal.
        for i in range(n):
            b.row(
                f"onelight_{i}_{k}", "=", 1,
                (1, vn("d_g", i, k)), (1, vn("d_y", i, k)),
                (1, vn("d_a", i, k)), (1, vn("d_r", i, k)),
            )

        # No two conflicting signals both blocking (blocking = not red).
        for i, j in spec.conflicting_pairs():
            b.row(
                f"conflict_{i}_{j}_{k}", "<=", 1,
                (1, vn("d_g", i, k)), (1, vn("d_y", i, k)), (1, vn("d_a", i, k)),
                (1, vn("d_g", j, k)), (1, vn("d_y", j, k)), (1, vn("d_a", j, k)),
            )

        # Transition blocking: one row per blocked ordered color pair per
        # signal per step, uniformly; at k=0 the previous color folds to a
        # constant, leaving rows rooted at other colors vacuous but well-formed.
        for i in range(n):
            for prev_c, next_c in table.blocked_pairs(i):
                b.row(
                    f"trans_{i}_{prev_c.letter}{next_c.letter}_{k}", "<=", 1,
                    (1, p_delta(prev_c, i, k)), (1, vn(_DELTA[next_c], i, k)),
                )

        for i in range(n):
            py = spec.yellow_period[i]
            pa = spec.amber_period[i]
            mg = spec.min_green[i]

            # Yellow timer recursion ty = (ty_prev + 1) * d_y, plus the
            # leave-early rule holding yellow for its full period.
            pty = p_timer("ty", init.t_y, i, k)
            b.row(f"yrec1_{i}_{k}", "<=", 0, (1, vn("ty", i, k)), (-py, vn("d_y", i, k)))
            b.row(f"yrec2_{i}_{k}", "<=", 1, (1, vn("ty", i, k)), (-1, pty))
            b.row(
                f"yrec3_{i}_{k}", ">=", 1 - (py + 1),
                (1, vn("ty", i, k)), (-1, pty), (-(py + 1), vn("d_y", i, k)),
            )
            b.row(
                f"yleave_{i}_{k}", "<=", 0,
                (py, p_delta(LightColor.YELLOW, i, k)), (-1, pty),
                (-py, vn("d_y", i, k)),
            )

            # Amber mirrors yellow; with no amber phase the zero bounds plus
            # transition rows already pin d_a and ta.
            if pa > 0:
                pta = p_timer("ta", init.t_a, i, k)
                b.row(f"arec1_{i}_{k}", "<=", 0, (1, vn("ta", i, k)), (-pa, vn("d_a", i, k)))
                b.row(f"arec2_{i}_{k}", "<=", 1, (1, vn("ta", i, k)), (-1, pta))
                b.row(
                    f"arec3_{i}_{k}", ">=", 1 - (pa + 1),
                    (1, vn("ta", i, k)), (-1, pta), (-(pa + 1), vn("d_a", i, k)),
                )
                b.row(
                    f"aleave_{i}_{k}", "<=", 0,
                    (pa, p_delta(LightColor.AMBER, i, k)), (-1, pta),
                    (-pa, vn("d_a", i, k)),
                )

            # Green timer recursion and the minimum-green exit rule.
            ptg = p_timer("tg", init.t_g, i, k)
            b.row(f"grec1_{i}_{k}", "<=", 0, (1, vn("tg", i, k)), (-mtg[i], vn("d_g", i, k)))
            b.row(f"grec2_{i}_{k}", "<=", 1, (1, vn("tg", i, k)), (-1, ptg))
            b.row(
                f"grec3_{i}_{k}", ">=", 1 - mtg[i],
                (1, vn("tg", i, k)), (-1, ptg), (-mtg[i], vn("d_g", i, k)),
            )
            if mg > 0:
                b.row(
                    f"mingreen_{i}_{k}", "<=", 0,
                    (mg, p_delta(LightColor.GREEN, i, k)), (-1, ptg),
                    (-mg, vn("d_g", i, k)),
                )

            # Not-green timer recursion tng = (tng_prev + 1) * (1 - d_g).
            ptng = p_timer("tng", init.t_ng, i, k)
            b.row(
                f"ngrec1_{i}_{k}", "<=", mng[i],
                (1, vn("tng", i, k)), (mng[i], vn("d_g", i, k)),
            )
            b.row(f"ngrec2_{i}_{k}", "<=", 1, (1, vn("tng", i, k)), (-1, ptng))
            b.row(
                f"ngrec3_{i}_{k}", ">=", 1,
                (1, vn("tng", i, k)), (-1, ptng), (mng[i], vn("d_g", i, k)),
            )

        # Green interval: a signal may only show green once every conflicting
        # signal has been not-green long enough.
        for j in range(n):
            for i in range(n):
                T = spec.green_interval[i][j]
                if i == j or T == 0:
                    continue
                if k == 0:
                    if T > init.t_ng[i]:
                        b.row(f"intv_{i}_{j}_{k}", "<=", 0, (1, vn("d_g", j, k)))
                else:
                    b.row(
                        f"intv_{i}_{j}_{k}", "<=", 0,
                        (T, vn("d_g", j, k)), (-1, vn("tng", i, k - 1)),
                    )

        # Flow is the exact minimum of saturation and availability when green,
        # zero otherwise; the selector m picks the binding side.
        for i in range(n):
            fm = spec.max_flow[i]
            pq = p_timer("q", init.q, i, k)
            ca = arr[k][i]
            b.row(f"fcap_{i}_{k}", "<=", 0, (1, vn("f", i, k)), (-fm, vn("d_g", i, k)))
            b.row(f"favail_{i}_{k}", "<=", ca, (1, vn("f", i, k)), (-1, pq))
            b.row(
                f"fsat_{i}_{k}", ">=", -mf[i],
                (1, vn("f", i, k)), (-fm, vn("d_g", i, k)), (-mf[i], vn("m", i, k)),
            )
            b.row(
                f"fdrain_{i}_{k}", ">=", ca - mf[i],
                (1, vn("f", i, k)), (-1, pq),
                (mf[i], vn("m", i, k)), (-mf[i], vn("d_g", i, k)),
            )

            # Queue balance and stop count (stops are affine in d_g).
            b.row(
                f"qbal_{i}_{k}", "=", ca,
                (1, vn("q", i, k)), (-1, pq), (1, vn("f", i, k)),
            )
            b.row(f"stop_{i}_{k}", "=", ca, (1, vn("s", i, k)), (ca, vn("d_g", i, k)))

            # z indicates a non-empty post-update queue; the waiting timer grows
            # only while not green with vehicles present.
            b.row(f"zlo_{i}_{k}", ">=", 0, (1, vn("q", i, k)), (-1, vn("z", i, k)))
            b.row(f"zhi_{i}_{k}", "<=", 0, (1, vn("q", i, k)), (-mq[i], vn("z", i, k)))
            ptw = p_timer("tw", init.t_w, i, k)
            b.row(
                f"twg_{i}_{k}", "<=", mtw[i],
                (1, vn("tw", i, k)), (mtw[i], vn("d_g", i, k)),
            )
            b.row(f"twz_{i}_{k}", "<=", 0, (1, vn("tw", i, k)), (-mtw[i], vn("z", i, k)))
            b.row(f"twub_{i}_{k}", "<=", 1, (1, vn("tw", i, k)), (-1, ptw))
            b.row(
                f"twlo_{i}_{k}", ">=", 1 - mtw[i],
                (1, vn("tw", i, k)), (-1, ptw),
                (mtw[i], vn("d_g", i, k)), (-mtw[i], vn("z", i, k)),
            )

        # Beyond the control horizon the continuation policy applies: green and
        # red persist, while the timing rows above run yellow and amber to
        # completion into their forced successors.
        if k >= C:
            for i in range(n):
                b.row(
                    f"holdg_{i}_{k}", ">=", 0,
                    (1, vn("d_g", i, k)), (-1, vn("d_g", i, k - 1)),
                )
                b.row(
                    f"holdr_{i}_{k}", ">=", 0,
                    (1, vn("d_r", i, k)), (-1, vn("d_r", i, k - 1)),
                )

    objective: list[tuple[str, float]] = []
    for k in range(P):
        for i in range(n):
            objective.append((vn("q", i, k), w.queue))
            objective.append((vn("tw", i, k), w.wait))
            objective.append((vn("s", i, k), w.stops))
            objective.append((vn("f", i, k), -w.flow))
            objective.append((vn("d_g", i, k), -w.not_green))
    objective_constant = w.not_green * n * P

    return MilpModel(
        name=f"signalmpc_n{n}_P{P}_C{C}",
        n=n,
        prediction_horizon=P,
        control_horizon=C,
        variables=tuple(b.variables),
        rows=tuple(b.rows),
        objective=tuple((v, c) for v, c in objective if c != 0.0),
        objective_constant=objective_constant,
    )


def embed_schedule(problem: HorizonProblem, actions: Sequence[ControlAction]) -> dict[str, int]:
    """Turn a schedule into a complete variable assignment for the encoded
    model by replaying it through the plant (auxiliary binaries included)."""
    spec = problem.spec
    P = problem.config.prediction_horizon
    if len(actions) != P:
        raise ValueError(f"need exactly {P} actions, got {len(actions)}")
    out: dict[str, int] = {}
    state = problem.initial
    for k, action in enumerate(actions):
        prev_q = state.q
        state = plant.step(state, action, problem.arrivals[k], spec)
        for i in range(spec.n):
            color = action.colors[i]
            for c, prefix in _DELTA.items():
                out[f"{prefix}_{i}_{k}"] = 1 if color is c else 0
            avail = problem.arrivals[k][i] + prev_q[i]
            is_green = color is LightColor.GREEN
            out[f"m_{i}_{k}"] = 1 if (is_green and spec.max_flow[i] <= avail) else 0
            out[f"z_{i}_{k}"] = 1 if state.q[i] >= 1 else 0
            out[f"f_{i}_{k}"] = state.f[i]
            out[f"q_{i}_{k}"] = state.q[i]
            out[f"tg_{i}_{k}"] = state.t_g[i]
            out[f"ty_{i}_{k}"] = state.t_y[i]
            out[f"ta_{i}_{k}"] = state.t_a[i]
            out[f"tng_{i}_{k}"] = state.t_ng[i]
            out[f"tw_{i}_{k}"] = state.t_w[i]
            out[f"s_{i}_{k}"] = state.s[i]
    return out


def evaluate_assignment(
    model: MilpModel, assignment: Mapping[str, float], tol: float = 1e-6
) -> tuple[float, tuple[str, ...]]:
    """Check an assignment against every variable domain and row of the model.

    Returns the objective value (including the constant term) and a tuple of
    human-readable violation descriptions; empty means feasible within tol.
    """
    violations: list[str] = []
    for var in model.variables:
        if var.name not in assignment:
            violations.append(f"variable {var.name} missing from assignment")
            continue
        v = assignment[var.name]
        if abs(v - round(v)) > tol:
            violations.append(f"variable {var.name} = {v} is not integral")
        if v < var.lb - tol or v > var.ub + tol:
            violations.append(
                f"variable {var.name} = {v} outside bounds [{var.lb}, {var.ub}]"
            )

    def val(name):
        return float(assignment.get(name, 0.0))

    for row in model.rows:
        lhs = 0.0
        for name, coef in row.terms:
            lhs += coef * val(name)
        bad = (
            (row.sense == "<=" and lhs > row.rhs + tol)
            or (row.sense == ">=" and lhs < row.rhs - tol)
            or (row.sense == "=" and abs(lhs - row.rhs) > tol)
        )
        if bad:
            violations.append(f"row {row.name}: {lhs} {row.sense} {row.rhs} violated")

    objective = model.objective_constant
    for name, coef in model.objective:
        objective += coef * val(name)
    return objective, tuple(violations)


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _expr(terms: Sequence[tuple[str, float]], constant: float = 0.0) -> str:
    parts: list[str] = []
    for name, coef in terms:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{_fmt(mag)} {name}"
        parts.append(f"{sign} {body}")
    if constant != 0.0:
        parts.append(f"{'-' if constant < 0 else '+'} {_fmt(abs(constant))}")
    if not parts:
        return "0"
    first = parts[0]
    first = first[2:] if first.startswith("+ ") else "-" + first[2:]
    return " ".join([first] + parts[1:])


def _wrap(prefix: str, expr: str, width: int = 76) -> list[str]:
    words = expr.split(" ")
    lines = [prefix]
    for word in words:
        if len(lines[-1]) + 1 + len(word) > width and lines[-1] not in (prefix, " "):
            lines.append(" ")
        lines[-1] = lines[-1] + " " + word if lines[-1] != " " else "  " + word
    return lines


def render_lp(model: MilpModel) -> str:
    """Deterministic CPLEX LP text for the model."""
    out = StringIO()
    out.write(f"\\ {model.name}\n")
    out.write(
        f"\\ signals={model.n} P={model.prediction_horizon} C={model.control_horizon}"
        f" rows={len(model.rows)} vars={len(model.variables)}\n"
    )
    out.write("Minimize\n")
    for line in _wrap(" obj:", _expr(model.objective, model.objective_constant)):
        out.write(line + "\n")
    out.write("Subject To\n")
    for row in model.rows:
        sense = row.sense if row.sense != "=" else "="
        body = f"{_expr(row.terms)} {sense} {_fmt(row.rhs)}"
        for line in _wrap(f" {row.name}:", body):
            out.write(line + "\n")
    out.write("Bounds\n")
    for var in model.variables:
        if var.kind == "integer":
            out.write(f" {var.lb} <= {var.name} <= {var.ub}\n")
    out.write("Binaries\n")
    for var in model.variables:
        if var.kind == "binary":
            out.write(f" {var.name}\n")
    out.write("Generals\n")
    for var in model.variables:
        if var.kind == "integer":
            out.write(f" {var.name}\n")
    out.write("End\n")
    return out.getvalue()


def export_lp(model: MilpModel, sink) -> int:
    """Write the LP text to a path or binary file-like object; returns the
    number of bytes written."""
    data = render_lp(model).encode("utf-8")
    if isinstance(sink, (str, Path)):
        with open(sink, "wb") as fh:
            fh.write(data)
    else:
        sink.write(data)
    return len(data)
