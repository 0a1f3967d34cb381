"""Collision-constrained dynamics of rigid spheres in Stokes flow."""
__version__ = "0.1.0"

from .kinematics import ParticleSet, step_configuration
from .constraints import build_constraint_system, detect_near_pairs
from .cqp import CqpProblem, solve_apgd, solve_bbpgd
from .mobility import make_backend, spd_probe

__all__ = [
    "ParticleSet", "step_configuration", "build_constraint_system", "detect_near_pairs",
    "CqpProblem", "solve_apgd", "solve_bbpgd", "make_backend", "spd_probe",
]
