"""Numerical laboratory for tetrahedrally symmetric four-bump bound states
of the perturbed nonlinear Schrodinger equation
``Lap u = (1 + eps V1(|y|)) u - |u|^{p-1} u`` on R^3.

Pipeline: radial ground state -> tetrahedral symmetry machinery -> grid
ansatz -> projected linear solve and contraction correction -> reduced
energy over the bump-distance window -> full Newton solve at the interior
maximizer.
"""

from .field import AnsatzConfig, Field, Grid, PotentialSpec
from .groundstate import RadialProfile, shoot_ground_state

__all__ = [
    "AnsatzConfig",
    "Field",
    "Grid",
    "PotentialSpec",
    "RadialProfile",
    "shoot_ground_state",
]

__version__ = "0.1.0"
