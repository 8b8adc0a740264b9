"""Tests for the MILP encoding: row inventory, trace embedding, objective
parity with the search, and the deterministic LP rendering."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from io import BytesIO

import pytest

from conftest import all_legal_schedules, make_spec, random_problem
from signalmpc import milp, plant
from signalmpc.optimizer import (
    DEFAULT_WEIGHTS,
    HorizonProblem,
    MpcConfig,
    ObjectiveWeights,
    solve,
)
from signalmpc.plant import ControlAction
from signalmpc.topology import IntersectionSpec, builtin_fourway

VARS_PER_SIGNAL_STEP = 14  # four color indicators, m, z, f, q, five timers, s


def _row_prefixes(model) -> Counter:
    return Counter(re.match(r"[a-z]+", row.name).group(0) for row in model.rows)


def _problem(spec, arrivals, C=None, weights=DEFAULT_WEIGHTS, initial=None):
    P = len(arrivals)
    cfg = MpcConfig(
        prediction_horizon=P,
        control_horizon=P if C is None else C,
        weights=weights,
    )
    if initial is None:
        initial = plant.initial_state(spec)
    return HorizonProblem(spec=spec, initial=initial, arrivals=tuple(arrivals), config=cfg)


def _amber_cross_spec() -> IntersectionSpec:
    """Four signals, cross conflict, amber on every signal."""
    conflict = ((0, 0, 1, 1), (0, 0, 1, 1), (1, 1, 0, 0), (1, 1, 0, 0))
    interval = tuple(
        tuple(3 if conflict[i][j] else 0 for j in range(4)) for i in range(4)
    )
    return IntersectionSpec.create(
        conflict=conflict,
        green_interval=interval,
        yellow_period=(2, 2, 2, 2),
        amber_period=(2, 2, 2, 2),
        min_green=(1, 1, 1, 1),
        max_flow=(1, 1, 1, 1),
    )


# --- structural row inventory ------------------------------------------------

def test_one_step_amber_cross_row_counts():
    prob = _problem(_amber_cross_spec(), [(0, 0, 0, 0)])
    model = milp.encode(prob)
    pref = _row_prefixes(model)
    assert pref["onelight"] == 4
    assert pref["trans"] == 32  # eight blocked ordered color pairs per signal
    assert pref["yrec"] + pref["yleave"] == 16
    assert pref["arec"] + pref["aleave"] == 16
    assert pref["conflict"] == 4  # unordered conflicting pairs of the cross
    assert len(model.variables) == 4 * VARS_PER_SIGNAL_STEP


def test_single_signal_has_no_conflict_or_amber_rows():
    spec = make_spec(
        conflict=((0,),),
        green_interval=((0,),),
        yellow=(1,),
        amber=(0,),
        min_green=(1,),
        max_flow=(1,),
    )
    model = milp.encode(_problem(spec, [(0,)]))
    pref = _row_prefixes(model)
    assert pref["conflict"] == 0
    assert pref["arec"] == 0 and pref["aleave"] == 0
    assert pref["onelight"] == 1
    assert len(model.variables) == VARS_PER_SIGNAL_STEP


def test_row_count_scales_linearly_in_horizon():
    spec = builtin_fourway()
    # Step 0 folds some rows into constants (the aged initial timers satisfy
    # the green-interval gates outright), so compare the per-step increments
    # from step 1 on, which must be identical blocks.
    counts = [
        len(milp.encode(_problem(spec, [(0, 0, 0, 0)] * p)).rows) for p in (1, 2, 3, 4)
    ]
    deltas = [b - a for a, b in zip(counts, counts[1:])]
    assert deltas[0] == deltas[1] == deltas[2] > 0


def test_hold_rows_only_past_the_control_horizon():
    spec = builtin_fourway()
    model = milp.encode(_problem(spec, [(0, 0, 0, 0)] * 4, C=2))
    hold_steps = sorted(
        {int(row.name.rsplit("_", 1)[1]) for row in model.rows if row.name.startswith("hold")}
    )
    assert hold_steps == [2, 3]
    pref = _row_prefixes(model)
    assert pref["holdg"] == 8 and pref["holdr"] == 8  # four signals x two steps


def test_model_name_and_metadata():
    spec = builtin_fourway()
    model = milp.encode(_problem(spec, [(0, 0, 0, 0)] * 5, C=3))
    assert model.name == "signalmpc_n4_P5_C3"
    assert model.n == 4
    assert model.prediction_horizon == 5
    assert model.control_horizon == 3
    assert model.objective_constant == pytest.approx(DEFAULT_WEIGHTS.not_green * 4 * 5)


# --- trace embedding ---------------------------------------------------------

def test_embedding_a_legal_schedule_is_feasible_with_exact_objective(rng):
    seen = 0
    for _ in range(25):
        prob = random_problem(rng, n_max=2, p_max=4)
        schedules = all_legal_schedules(prob)
        if not schedules:
            continue
        model = milp.encode(prob)
        actions, objective = schedules[rng.randrange(len(schedules))]
        assignment = milp.embed_schedule(prob, actions)
        value, violations = milp.evaluate_assignment(model, assignment)
        assert violations == ()
        assert value == objective
        seen += 1
    assert seen >= 15


def test_embedding_covers_every_variable_exactly_once(rng):
    prob = random_problem(rng, n_max=2, p_max=3)
    schedules = all_legal_schedules(prob)
    if not schedules:
        pytest.skip("infeasible random instance")
    model = milp.encode(prob)
    assignment = milp.embed_schedule(prob, schedules[0][0])
    assert set(assignment) == {v.name for v in model.variables}


def test_flipping_a_color_indicator_breaks_the_single_light_row():
    spec = builtin_fourway()
    prob = _problem(spec, [(0, 0, 0, 0)] * 2)
    model = milp.encode(prob)
    actions = [ControlAction.from_letters("RRRR"), ControlAction.from_letters("RRRR")]
    assignment = dict(milp.embed_schedule(prob, actions))
    assert assignment["d_g_0_0"] == 0 and assignment["d_r_0_0"] == 1
    assignment["d_g_0_0"] = 1  # two lamps burning at once
    _, violations = milp.evaluate_assignment(model, assignment)
    assert any(v.startswith("row onelight_0_0") for v in violations)


def test_all_zero_assignment_is_infeasible():
    spec = builtin_fourway()
    model = milp.encode(_problem(spec, [(0, 0, 0, 0)]))
    assignment = {v.name: 0 for v in model.variables}
    _, violations = milp.evaluate_assignment(model, assignment)
    assert violations, "a dark intersection must violate the one-light rows"
    assert any(v.startswith("row onelight") for v in violations)


def test_changing_greens_after_the_control_horizon_violates_hold_rows():
    spec = make_spec(
        conflict=((0, 1), (1, 0)),
        green_interval=((0, 2), (2, 0)),
        yellow=(1, 1),
        amber=(0, 0),
        min_green=(1, 1),
        max_flow=(1, 1),
    )
    prob = _problem(spec, [(0, 0)] * 3, C=1)
    model = milp.encode(prob)
    # Stepwise legal, but the green on signal 0 retires after the control
    # horizon instead of holding.
    actions = [
        ControlAction.from_letters("GR"),
        ControlAction.from_letters("GR"),
        ControlAction.from_letters("YR"),
    ]
    assignment = milp.embed_schedule(prob, actions)
    _, violations = milp.evaluate_assignment(model, assignment)
    assert any(v.startswith("row holdg_0_2") for v in violations)


def test_queue_balance_detects_a_cooked_ledger():
    spec = builtin_fourway()
    prob = _problem(spec, [(1, 0, 0, 0)] * 2)
    model = milp.encode(prob)
    actions = [ControlAction.from_letters("GGRR")] * 2
    assignment = dict(milp.embed_schedule(prob, actions))
    assignment["q_0_1"] += 5  # vehicles out of thin air
    _, violations = milp.evaluate_assignment(model, assignment)
    assert any(v.startswith("row qbal_0_1") for v in violations)


# --- optimum parity with the search ------------------------------------------

def _milp_optimum(prob) -> float | None:
    """Minimum evaluated objective over the embeddings of every legal
    schedule; the model itself must accept each of them."""
    schedules = all_legal_schedules(prob)
    if not schedules:
        return None
    model = milp.encode(prob)
    best = None
    for actions, objective in schedules:
        value, violations = milp.evaluate_assignment(model, milp.embed_schedule(prob, actions))
        assert violations == ()
        assert value == objective
        if best is None or value < best:
            best = value
    return best


def test_encoded_optimum_matches_search_on_pinned_instance():
    spec = make_spec(
        conflict=((0, 1), (1, 0)),
        green_interval=((0, 2), (2, 0)),
        yellow=(1, 1),
        amber=(0, 0),
        min_green=(1, 1),
        max_flow=(1, 1),
    )
    arrivals = ((0, 1), (0, 1), (0, 0), (0, 1))
    # Dyadic weights make the objective an exact sum in any evaluation order,
    # so the two routes can be compared with ==.
    weights = ObjectiveWeights(queue=1.0, wait=0.5, stops=1.0, flow=2.0, not_green=0.25)
    prob = _problem(spec, arrivals, weights=weights)
    report = solve(prob)
    assert _milp_optimum(prob) == report.schedule.objective


def test_encoded_optimum_matches_search_on_random_instances(rng):
    agreements = 0
    for trial in range(40):
        equal = trial % 2 == 0
        prob = random_problem(rng, n_max=2, p_max=4, equal_horizons=equal)
        best = _milp_optimum(prob)
        if best is None:
            continue
        report = solve(prob)
        assert report.proven_optimal
        assert best == report.schedule.objective
        agreements += 1
    assert agreements >= 25


# --- rendering ---------------------------------------------------------------

def test_render_is_deterministic():
    spec = builtin_fourway()
    arrivals = [(1, 0, 2, 1)] * 6
    first = milp.render_lp(milp.encode(_problem(spec, arrivals, C=4)))
    second = milp.render_lp(milp.encode(_problem(spec, arrivals, C=4)))
    assert first == second
    assert hashlib.sha256(first.encode()).digest() == hashlib.sha256(second.encode()).digest()


def test_render_has_cplex_lp_sections_in_order():
    model = milp.encode(_problem(builtin_fourway(), [(0, 0, 0, 0)] * 2))
    text = milp.render_lp(model)
    assert text.startswith("\\ signalmpc_n4_P2_C2\n")
    order = [text.index(tok) for tok in ("Minimize", "obj:", "Subject To", "Bounds", "Binaries", "Generals", "End")]
    assert order == sorted(order)
    assert text.rstrip().endswith("End")
    assert all(len(line) <= 80 for line in text.splitlines())


def test_export_lp_to_path_and_filelike(tmp_path):
    model = milp.encode(_problem(builtin_fourway(), [(0, 0, 0, 0)] * 2))
    target = tmp_path / "model.lp"
    written = milp.export_lp(model, target)
    assert written == target.stat().st_size
    buf = BytesIO()
    assert milp.export_lp(model, buf) == written
    assert buf.getvalue() == target.read_bytes()


def test_weights_flow_into_the_objective():
    weights = ObjectiveWeights(queue=2.0, wait=0.0, stops=0.0, flow=1.0, not_green=0.0)
    model = milp.encode(_problem(builtin_fourway(), [(0, 0, 0, 0)], weights=weights))
    coeff = dict(model.objective)
    assert coeff["q_0_0"] == 2.0
    assert coeff["f_0_0"] == -1.0
    assert "tw_0_0" not in coeff and "s_0_0" not in coeff and "d_g_0_0" not in coeff
    assert model.objective_constant == 0.0
