"""Continuous-time distributed optimization under edge agreements."""

__version__ = "0.1.0"

from .constraints import (
    EdgeConstraint,
    ProjectedConstraint,
    StackedSystem,
    agreement_error,
    feasible_point,
    mirror,
    project_constraint,
    residual,
    stack,
    well_configured,
)
from .graph import Graph, build_graph, incidence_matrix, is_connected
from .harness import Scenario, Trajectory, RunSummary, run, validate_scenario
from .integrate import IntegratorConfig, StopRule, integrate
from .objectives import ExpSum, Quadratic, SquaredDistance, Zero
from .reference import ReferenceSolution, distance_to_opt, solve_general, solve_quadratic_kkt
