"""Mean curvature flow with contact angle by Chambolle-type thresholding.

Each time step computes the signed distance to the current set, minimizes a
capillary total-variation energy plus a quadratic fidelity to it by split
Bregman, and keeps the negative part of the minimizer.
"""
__version__ = "0.1.0"

from .bregman import BoundaryField, SolverParams, solve_subproblem
from .capillary import ContactAngleSpec, build_beta, detect_contact_arcs
from .config import ExperimentConfig, parse_config, preset_config
from .distance import signed_distance
from .geometry import Polygon, extract_zero_contour
from .grid import ConfigError, GridSpec, make_grid
from .scheme import EvolutionState, evolve, initial_state, run, step

__all__ = [
    "BoundaryField",
    "ConfigError",
    "ContactAngleSpec",
    "EvolutionState",
    "ExperimentConfig",
    "GridSpec",
    "Polygon",
    "SolverParams",
    "build_beta",
    "detect_contact_arcs",
    "evolve",
    "extract_zero_contour",
    "initial_state",
    "make_grid",
    "parse_config",
    "preset_config",
    "run",
    "signed_distance",
    "solve_subproblem",
    "step",
]
