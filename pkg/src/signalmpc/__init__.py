"""signalmpc: legality-first model-predictive control of traffic signals.

The package splits into plant dynamics (`plant`), intersection layout and
transition rules (`topology`), the legality verifier (`legality`), the exact
branch-and-bound schedule optimizer (`optimizer`), an equivalent explicit
mixed-integer encoding (`milp`), a microscopic simulator with a fixed-time
baseline (`sim`), and a command-line interface (`cli`).
"""

from .legality import ConstraintKind, Violation, check_schedule, check_step
from .milp import MilpModel, encode, evaluate_assignment, export_lp
from .optimizer import (
    DEFAULT_WEIGHTS,
    HorizonProblem,
    MpcConfig,
    ObjectiveWeights,
    Schedule,
    SolveReport,
    enumerate_legal,
    mpc_step,
    solve,
)
from .plant import ArrivalVector, ControlAction, PlantState, initial_state, step
from .sim import (
    MetricsReport,
    MpcController,
    ScenarioConfig,
    TimeProgram,
    TimeProgramController,
    fourway_scenario,
    fourway_time_program,
    run,
)
from .topology import (
    IntersectionSpec,
    LightColor,
    TransitionTable,
    builtin_fourway,
    derive_transitions,
    load_spec,
    save_spec,
    validate_spec,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalVector",
    "ConstraintKind",
    "ControlAction",
    "DEFAULT_WEIGHTS",
    "HorizonProblem",
    "IntersectionSpec",
    "LightColor",
    "MetricsReport",
    "MilpModel",
    "MpcConfig",
    "MpcController",
    "ObjectiveWeights",
    "PlantState",
    "ScenarioConfig",
    "Schedule",
    "SolveReport",
    "TimeProgram",
    "TimeProgramController",
    "TransitionTable",
    "Violation",
    "builtin_fourway",
    "check_schedule",
    "check_step",
    "derive_transitions",
    "encode",
    "enumerate_legal",
    "evaluate_assignment",
    "export_lp",
    "fourway_scenario",
    "fourway_time_program",
    "initial_state",
    "load_spec",
    "mpc_step",
    "run",
    "save_spec",
    "solve",
    "step",
    "validate_spec",
]
