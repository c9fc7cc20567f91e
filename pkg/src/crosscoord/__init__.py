"""Velocity coordination for vehicles crossing an unsignalized intersection."""

from .geometry import GeometryConfig, IntersectionModel, build_intersection, conflict_frame
from .optimizer import ConflictInput, MilpProblem, MilpSolution, assemble, oracle_solve, priority_matrix, solve
from .planner import PlannerParams, PlanningError, plan, profile_eval, sync_accel_times
from .scenario import Scenario, ScenarioError, load_scenario
from .selector import build_graph, extract_subset, spanning_tree
from .simulator import SimResult, World, check_safety, run, step

__version__ = "0.1.0"

__all__ = [
    "ConflictInput",
    "GeometryConfig",
    "IntersectionModel",
    "MilpProblem",
    "MilpSolution",
    "PlannerParams",
    "PlanningError",
    "Scenario",
    "ScenarioError",
    "SimResult",
    "World",
    "assemble",
    "build_graph",
    "build_intersection",
    "check_safety",
    "conflict_frame",
    "extract_subset",
    "load_scenario",
    "oracle_solve",
    "plan",
    "priority_matrix",
    "profile_eval",
    "run",
    "solve",
    "spanning_tree",
    "step",
    "sync_accel_times",
]
