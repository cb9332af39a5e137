"""Hybrid discontinuous Galerkin solver for convection-diffusion on pipe networks."""

__version__ = "0.1.0"

from .network import (
    NetworkTopology,
    TimeProfile,
    load_fixture,
    load_network,
    validate_flow_conservation,
)
from .mesh import build_graded, build_uniform, mesh_stats, transition_point
from .space import DiscreteSpace
from .assembly import DiscreteSystem, assemble
from .scheme import SolveConfig, solve, solve_convdiff, solve_transport

__all__ = [
    "NetworkTopology", "TimeProfile", "load_fixture", "load_network",
    "validate_flow_conservation", "build_graded", "build_uniform", "mesh_stats",
    "transition_point", "DiscreteSpace", "DiscreteSystem", "assemble", "SolveConfig",
    "solve", "solve_convdiff", "solve_transport",
]
