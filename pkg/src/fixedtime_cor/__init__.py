"""Resilient fixed-time cooperative output regulation of heterogeneous agents under DoS attacks."""

from .dos import AttackBudget, AttackSchedule, generate_schedule, validate_budget
from .graph import DirectedGraph, build_h_matrix, compute_gain_matrix_k
from .observer import ObserverParams
from .regulation import AgentModel, ExosystemModel
from .scenario import build_design, load_config, reference_config
from .simulation import ScenarioDesign, SimulationResult, run, settling_time, synthesize

__all__ = [
    "AgentModel",
    "AttackBudget",
    "AttackSchedule",
    "DirectedGraph",
    "ExosystemModel",
    "ObserverParams",
    "ScenarioDesign",
    "SimulationResult",
    "build_design",
    "build_h_matrix",
    "compute_gain_matrix_k",
    "generate_schedule",
    "load_config",
    "reference_config",
    "run",
    "settling_time",
    "synthesize",
    "validate_budget",
]
