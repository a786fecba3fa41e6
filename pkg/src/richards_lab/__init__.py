"""Linearization schemes for Richards' equation on P1 triangles."""

from .constitutive import VanGenuchtenParams, lipschitz_info
from .mesh import Mesh, build_structured, interpolate_nodal, tag_boundary
from .schemes import Problem, SchemeSpec, StoppingRule, SwitchRule, run_simulation, solve_time_step

__all__ = [
    "Mesh",
    "Problem",
    "SchemeSpec",
    "StoppingRule",
    "SwitchRule",
    "VanGenuchtenParams",
    "build_structured",
    "interpolate_nodal",
    "lipschitz_info",
    "run_simulation",
    "solve_time_step",
    "tag_boundary",
]

__version__ = "0.1.0"
