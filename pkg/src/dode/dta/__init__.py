"""Mesoscopic dynamic traffic assignment (the inner problem)."""
from .assignment import (
    AssignmentMatrix,
    DtaResult,
    Simulator,
    SueConfig,
    TripPlan,
    TripStats,
    assign,
    count_from_trace,
    extract_assignment_matrix,
    gawron_update,
    round_demand,
    spawn_trips,
)
from .paths import NoPathError, PathFinder, time_dependent_shortest_paths
from .queue import Trace, simulate_once

__all__ = [
    "AssignmentMatrix", "DtaResult", "NoPathError", "PathFinder", "Simulator", "SueConfig",
    "Trace", "TripPlan", "TripStats", "assign", "count_from_trace", "extract_assignment_matrix",
    "gawron_update", "round_demand", "simulate_once", "spawn_trips", "time_dependent_shortest_paths",
]
