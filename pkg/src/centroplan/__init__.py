"""Centroidal momentum planning, LQR tracking and reduced-model validation."""

from .contacts import (
    ContactPhase,
    ContactSchedule,
    CostWeights,
    LimbModel,
    LqrSettings,
    OptimizerSettings,
    Scenario,
    SwingTrajectory,
    load_scenario,
    parse_scenario,
    serialize_scenario,
)
from .errors import (
    CentroplanError,
    IntegrationError,
    ScenarioError,
    ScheduleError,
    SimulationDivergedError,
    SolverDivergedError,
)
from .estimators import LqrTracker, MomentumPlanner
from .lqr import GainSchedule, LqrWeights, build_window, sliding_recompute
from .model import CentroidalState, ContactWrench, ModelParams, momentum_rate, wrench_map
from .optimizer import (
    Plan,
    ReferenceTrajectory,
    SolveOptions,
    assemble,
    extract_plan,
    receding_shift,
    shift_multipliers,
    solve,
    window_scenario,
)
from .seeding import iterated_plan, seed_references
from .simulate import Disturbance, RunLog, clamp_wrench, simulate

__version__ = "0.1.0"

__all__ = [
    "CentroidalState",
    "ContactWrench",
    "ModelParams",
    "momentum_rate",
    "wrench_map",
    "ContactPhase",
    "ContactSchedule",
    "SwingTrajectory",
    "LimbModel",
    "CostWeights",
    "OptimizerSettings",
    "LqrSettings",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "serialize_scenario",
    "ReferenceTrajectory",
    "SolveOptions",
    "Plan",
    "assemble",
    "solve",
    "extract_plan",
    "receding_shift",
    "shift_multipliers",
    "window_scenario",
    "seed_references",
    "iterated_plan",
    "LqrWeights",
    "GainSchedule",
    "build_window",
    "sliding_recompute",
    "Disturbance",
    "RunLog",
    "clamp_wrench",
    "simulate",
    "MomentumPlanner",
    "LqrTracker",
    "CentroplanError",
    "ScenarioError",
    "ScheduleError",
    "IntegrationError",
    "SolverDivergedError",
    "SimulationDivergedError",
    "__version__",
]
