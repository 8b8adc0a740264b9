"""Legality verifier: every constraint family alone, then whole schedules."""

from random import Random

import pytest

from signalmpc import legality, plant, sim
from signalmpc.legality import ConstraintKind
from signalmpc.plant import ControlAction, PlantState
from signalmpc.topology import LightColor, builtin_fourway, derive_transitions

from conftest import crossing_pair_spec, make_spec

G, Y, A, R = LightColor.GREEN, LightColor.YELLOW, LightColor.AMBER, LightColor.RED


def _state(spec, colors, **kw):
    n = spec.n
    fields = dict(
        q=(0,) * n, t_g=(0,) * n, t_y=(0,) * n, t_a=(0,) * n,
        t_ng=(0,) * n, t_w=(0,) * n, f=(0,) * n, s=(0,) * n,
    )
    fields.update(kw)
    return PlantState(action=ControlAction(colors=tuple(colors)), **fields)


# --- single light (raw one-hot vectors) -------------------------------------

def test_single_light_accepts_one_hot():
    assert legality.check_single_light([1, 0], [0, 0], [0, 0], [0, 1]) == []


def test_single_light_rejects_two_active():
    out = legality.check_single_light([1], [0], [0], [1])
    assert len(out) == 1
    assert out[0].kind is ConstraintKind.SINGLE_LIGHT
    assert out[0].signals == (0,)


def test_single_light_rejects_all_zero():
    out = legality.check_single_light([0], [0], [0], [0])
    assert [v.kind for v in out] == [ConstraintKind.SINGLE_LIGHT]


# --- conflict ----------------------------------------------------------------

def test_conflicting_greens_flagged():
    spec = builtin_fourway()
    out = legality.check_conflict(ControlAction.from_letters("GRGR"), spec)
    assert [(v.kind, v.signals) for v in out] == [(ConstraintKind.CONFLICT, (0, 2))]


def test_parallel_greens_allowed():
    spec = builtin_fourway()
    assert legality.check_conflict(ControlAction.from_letters("GGRR"), spec) == []


def test_yellow_blocks_the_conflict_area():
    spec = builtin_fourway()
    out = legality.check_conflict(ControlAction.from_letters("YRGR"), spec)
    assert [(v.kind, v.signals) for v in out] == [(ConstraintKind.CONFLICT, (0, 2))]


def test_amber_blocks_the_conflict_area():
    spec = crossing_pair_spec(amber=(1, 1))
    out = legality.check_conflict(ControlAction(colors=(A, G)), spec)
    assert [v.kind for v in out] == [ConstraintKind.CONFLICT]


# --- transitions -------------------------------------------------------------

def test_red_to_yellow_is_not_a_permitted_hop():
    spec = crossing_pair_spec()
    table = derive_transitions(spec)
    out = legality.check_transition(
        ControlAction(colors=(R, R)), ControlAction(colors=(Y, R)), table
    )
    assert [(v.kind, v.signals) for v in out] == [(ConstraintKind.TRANSITION, (0,))]


def test_self_loops_are_permitted():
    spec = crossing_pair_spec()
    table = derive_transitions(spec)
    assert legality.check_transition(
        ControlAction(colors=(G, R)), ControlAction(colors=(G, R)), table
    ) == []


def test_red_to_green_blocked_when_amber_required():
    spec = crossing_pair_spec(amber=(2, 0))
    table = derive_transitions(spec)
    out = legality.check_transition(
        ControlAction(colors=(R, R)), ControlAction(colors=(G, R)), table
    )
    assert [(v.kind, v.signals) for v in out] == [(ConstraintKind.TRANSITION, (0,))]


# --- timed colors ------------------------------------------------------------

def test_leaving_yellow_early_is_flagged():
    spec = make_spec([[0]], [[0]], [4], [0], [0], [1])
    prev = _state(spec, (Y,), t_y=(2,), t_ng=(2,))
    out = legality.check_timed_color(prev, ControlAction(colors=(R,)), spec, Y)
    assert [v.kind for v in out] == [ConstraintKind.YELLOW_TIMING]


def test_overstaying_yellow_is_flagged():
    spec = make_spec([[0]], [[0]], [4], [0], [0], [1])
    prev = _state(spec, (Y,), t_y=(4,), t_ng=(4,))
    out = legality.check_timed_color(prev, ControlAction(colors=(Y,)), spec, Y)
    assert [v.kind for v in out] == [ConstraintKind.YELLOW_TIMING]


def test_leaving_yellow_exactly_on_time_is_clean():
    spec = make_spec([[0]], [[0]], [4], [0], [0], [1])
    prev = _state(spec, (Y,), t_y=(4,), t_ng=(4,))
    assert legality.check_timed_color(prev, ControlAction(colors=(R,)), spec, Y) == []


def test_amber_timing_mirrors_yellow():
    spec = make_spec([[0]], [[0]], [1], [3], [0], [1])
    prev = _state(spec, (A,), t_a=(1,), t_ng=(4,))
    early = legality.check_timed_color(prev, ControlAction(colors=(G,)), spec, A)
    assert [v.kind for v in early] == [ConstraintKind.AMBER_TIMING]
    hold = legality.check_timed_color(prev, ControlAction(colors=(A,)), spec, A)
    assert hold == []


def test_timed_color_rejects_untimed_colors():
    spec = make_spec([[0]], [[0]], [1], [0], [0], [1])
    prev = _state(spec, (G,), t_g=(1,))
    with pytest.raises(ValueError):
        legality.check_timed_color(prev, ControlAction(colors=(G,)), spec, G)


# --- green interval ----------------------------------------------------------

def test_green_interval_blocks_fresh_green():
    spec = crossing_pair_spec(interval=6)
    prev = _state(spec, (G, R), t_g=(6, 0), t_ng=(0, 10))
    out = legality.check_green_interval(prev, ControlAction(colors=(Y, G)), spec)
    assert [(v.kind, v.signals) for v in out] == [(ConstraintKind.GREEN_INTERVAL, (0, 1))]


def test_green_interval_satisfied_at_boundary():
    spec = crossing_pair_spec(interval=6)
    prev = _state(spec, (R, R), t_ng=(6, 10))
    assert legality.check_green_interval(prev, ControlAction(colors=(R, G)), spec) == []


def test_green_interval_one_second_short():
    spec = crossing_pair_spec(interval=6)
    prev = _state(spec, (R, R), t_ng=(5, 10))
    out = legality.check_green_interval(prev, ControlAction(colors=(R, G)), spec)
    assert [v.kind for v in out] == [ConstraintKind.GREEN_INTERVAL]


# --- minimum green -----------------------------------------------------------

def test_min_green_blocks_early_exit():
    spec = make_spec([[0]], [[0]], [1], [0], [6], [1])
    prev = _state(spec, (G,), t_g=(3,))
    out = legality.check_min_green(prev, ControlAction(colors=(Y,)), spec)
    assert [v.kind for v in out] == [ConstraintKind.MIN_GREEN]


def test_min_green_boundary_exit_is_clean():
    spec = make_spec([[0]], [[0]], [1], [0], [6], [1])
    prev = _state(spec, (G,), t_g=(6,))
    assert legality.check_min_green(prev, ControlAction(colors=(Y,)), spec) == []


def test_staying_green_never_violates_min_green():
    spec = make_spec([[0]], [[0]], [1], [0], [6], [1])
    prev = _state(spec, (G,), t_g=(3,))
    assert legality.check_min_green(prev, ControlAction(colors=(G,)), spec) == []


# --- schedules ---------------------------------------------------------------

def test_fixed_time_program_two_cycles_clean():
    spec = builtin_fourway()
    program = sim.fourway_time_program()
    horizon = 2 * program.cycle_s
    schedule = program.unrolled(horizon)
    arrivals = [(0, 0, 0, 0)] * horizon
    assert legality.check_schedule(plant.initial_state(spec), schedule, arrivals, spec) == []


def test_schedule_with_crossing_greens_is_flagged():
    spec = builtin_fourway()
    schedule = [ControlAction.from_letters("GRGR")]
    out = legality.check_schedule(plant.initial_state(spec), schedule, [(0,) * 4], spec)
    assert any(v.kind is ConstraintKind.CONFLICT for v in out)


def test_empty_schedule_is_vacuously_legal():
    spec = builtin_fourway()
    assert legality.check_schedule(plant.initial_state(spec), [], [], spec) == []


def test_schedule_length_mismatch_rejected():
    spec = builtin_fourway()
    with pytest.raises(ValueError):
        legality.check_schedule(
            plant.initial_state(spec), [ControlAction.all_red(4)], [], spec
        )


def test_prefix_checking_is_incremental():
    rng = Random(77)
    spec = builtin_fourway()
    program = sim.fourway_time_program()
    schedule = program.unrolled(90)
    arrivals = [tuple(rng.randint(0, 1) for _ in range(4)) for _ in schedule]
    initial = plant.initial_state(spec)
    whole = legality.check_schedule(initial, schedule, arrivals, spec)
    k = 40
    prefix = legality.check_schedule(initial, schedule[:k], arrivals[:k], spec)
    state = initial
    for action, ca in zip(schedule[:k], arrivals[:k]):
        state = plant.step(state, action, ca, spec)
    table = derive_transitions(spec)
    extension = []
    for j, (action, ca) in enumerate(zip(schedule[k:], arrivals[k:]), start=k):
        extension += legality.check_step(state, action, spec, table, step=j)
        state = plant.step(state, action, ca, spec)
    assert whole == prefix + extension


def test_no_amber_appears_without_an_amber_period():
    rng = Random(88)
    from conftest import random_legal_walk, random_spec

    for _ in range(25):
        spec = random_spec(rng)
        if any(spec.amber_period):
            continue
        trail = random_legal_walk(rng, spec, steps=12)
        for _, action, _, _ in trail:
            assert all(c is not A for c in action.colors)


def test_violation_rendering_names_step_kind_and_signals():
    v = legality.Violation(3, ConstraintKind.CONFLICT, (0, 2), "both occupy")
    text = str(v)
    assert "step 3" in text and "Conflict" in text and "0,2" in text
