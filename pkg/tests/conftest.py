"""Shared generators and oracles for the test suite.

Everything random is driven by explicit ``random.Random`` instances with fixed
seeds so failures reproduce exactly. The generators deliberately use only the
public plant/legality API plus raw itertools enumeration, never the optimizer's
internals, so they stay valid as independent cross-checks.
"""

from itertools import product
from random import Random

import pytest

from signalmpc import legality, plant
from signalmpc.optimizer import (
    HorizonProblem,
    MpcConfig,
    ObjectiveWeights,
    stage_cost,
)
from signalmpc.plant import ControlAction
from signalmpc.topology import (
    IntersectionSpec,
    LightColor,
    derive_transitions,
    require_valid,
)

# Dyadic weight values keep every stage cost exactly representable, so
# objectives computed in different summation orders compare with ==.
_WEIGHT_CHOICES = (0.0, 0.25, 0.5, 1.0, 1.5, 2.0)


def make_spec(conflict, green_interval, yellow, amber, min_green, max_flow):
    return require_valid(
        IntersectionSpec.create(
            conflict=conflict,
            green_interval=green_interval,
            yellow_period=yellow,
            amber_period=amber,
            min_green=min_green,
            max_flow=max_flow,
        )
    )


def single_signal_spec(yellow=1, amber=0, min_green=1, max_flow=1):
    return make_spec([[0]], [[0]], [yellow], [amber], [min_green], [max_flow])


def crossing_pair_spec(interval=2, yellow=1, amber=(0, 0), min_green=1, max_flow=1):
    return make_spec(
        conflict=[[0, 1], [1, 0]],
        green_interval=[[0, interval], [interval, 0]],
        yellow=[yellow, yellow],
        amber=list(amber),
        min_green=[min_green, min_green],
        max_flow=[max_flow, max_flow],
    )


def random_spec(rng: Random, n_max: int = 3) -> IntersectionSpec:
    """A small random intersection with conflicting pairs carrying positive
    green intervals and non-conflicting pairs carrying none."""
    n = rng.randint(1, n_max)
    conflict = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.6:
                conflict[i][j] = conflict[j][i] = 1
    interval = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i != j and conflict[i][j]:
                interval[i][j] = rng.randint(1, 3)
    return make_spec(
        conflict=conflict,
        green_interval=interval,
        yellow=[rng.randint(1, 2) for _ in range(n)],
        amber=[rng.choice((0, 0, 1, 2)) for _ in range(n)],
        min_green=[rng.randint(0, 2) for _ in range(n)],
        max_flow=[rng.randint(1, 2) for _ in range(n)],
    )


def random_weights(rng: Random) -> ObjectiveWeights:
    return ObjectiveWeights(
        queue=rng.choice(_WEIGHT_CHOICES),
        wait=rng.choice(_WEIGHT_CHOICES),
        stops=rng.choice(_WEIGHT_CHOICES),
        flow=rng.choice(_WEIGHT_CHOICES),
        not_green=rng.choice(_WEIGHT_CHOICES),
    )


def legal_actions(state, spec, table=None):
    """Every action legal from the state, by brute cross-product of per-signal
    permitted colors filtered through the full per-step check."""
    if table is None:
        table = derive_transitions(spec)
    per_signal = [
        [c for c in LightColor if table.permits(i, state.action.colors[i], c)]
        for i in range(spec.n)
    ]
    out = []
    for colors in product(*per_signal):
        action = ControlAction(colors=colors)
        if not legality.check_step(state, action, spec, table):
            out.append(action)
    return out


def random_legal_step(rng: Random, state, spec, table):
    """One uniformly-sampled legal action via per-signal rejection sampling,
    falling back to exhaustive choice if sampling keeps missing.  Returns None
    from a dead-end state (rare but reachable: an amber that must turn green
    while a conflicting clearance clock has not yet elapsed)."""
    colors_by_signal = [
        [c for c in LightColor if table.permits(i, state.action.colors[i], c)]
        for i in range(spec.n)
    ]
    for _ in range(12):
        action = ControlAction(
            colors=tuple(rng.choice(cs) for cs in colors_by_signal)
        )
        if not legality.check_step(state, action, spec, table):
            return action
    options = legal_actions(state, spec, table)
    if not options:
        return None
    return rng.choice(options)


def random_legal_walk(rng: Random, spec, steps, max_arrival=2):
    """Walk the plant with random legal actions and arrivals; returns the list
    of (state_before, action, arrivals, state_after) tuples.  The walk stops
    early if it reaches a dead-end state."""
    table = derive_transitions(spec)
    state = plant.initial_state(spec)
    trail = []
    for _ in range(steps):
        action = random_legal_step(rng, state, spec, table)
        if action is None:
            break
        ca = tuple(rng.randint(0, max_arrival) for _ in range(spec.n))
        nxt = plant.step(state, action, ca, spec)
        trail.append((state, action, ca, nxt))
        state = nxt
    return trail


def random_problem(
    rng: Random,
    n_max: int = 3,
    p_max: int = 6,
    equal_horizons: bool = True,
    warmup_steps: int = 10,
) -> HorizonProblem:
    """A random small horizon problem rooted at a state reached by a short
    random legal walk, with random arrivals and dyadic weights."""
    spec = random_spec(rng, n_max)
    trail = random_legal_walk(rng, spec, rng.randint(0, warmup_steps))
    initial = trail[-1][3] if trail else plant.initial_state(spec)
    P = rng.randint(2, p_max)
    C = P if equal_horizons else rng.randint(max(1, P - 2), P)
    arrivals = tuple(
        tuple(rng.randint(0, 2) for _ in range(spec.n)) for _ in range(P)
    )
    cfg = MpcConfig(prediction_horizon=P, control_horizon=C, weights=random_weights(rng))
    return HorizonProblem(spec=spec, initial=initial, arrivals=arrivals, config=cfg)


def all_legal_schedules(problem: HorizonProblem):
    """Exhaustive list of (actions, objective) over the full horizon.

    Steps past the control horizon follow the hold policy restated here
    independently: green and red hold; yellow and amber offer only their own
    color and their cycle successor, with the timing checks then forcing the
    unique legal choice. Objectives accumulate left-associated, matching the
    solver's summation order.
    """
    spec = problem.spec
    cfg = problem.config
    P, C = cfg.prediction_horizon, cfg.control_horizon
    table = derive_transitions(spec)
    successor = {
        LightColor.YELLOW: LightColor.RED,
        LightColor.AMBER: LightColor.GREEN,
    }
    results = []

    def descend(k, state, actions, obj):
        if k == P:
            results.append((tuple(actions), obj))
            return
        for colors in product(*[
            [
                c
                for c in LightColor
                if table.permits(i, state.action.colors[i], c)
                and (
                    k < C
                    or c is state.action.colors[i]
                    or c is successor.get(state.action.colors[i])
                )
            ]
            for i in range(spec.n)
        ]):
            action = ControlAction(colors=colors)
            if legality.check_step(state, action, spec, table, step=k):
                continue
            nxt = plant.step(state, action, problem.arrivals[k], spec)
            descend(
                k + 1,
                nxt,
                actions + [action],
                obj + stage_cost(nxt, problem.arrivals[k], cfg.weights),
            )

    descend(0, problem.initial, [], 0.0)
    return results


@pytest.fixture
def rng():
    return Random(20260823)
