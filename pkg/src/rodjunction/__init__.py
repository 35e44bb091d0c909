"""Equilibria of elastic rod networks meeting at one junction (bending-torsion limit model)."""
from .model import ConfigError, LoadProfile, Network, RodSpec, build_network, check_balance, cumulative_load
from .post import EquilibriumReport, contact_fields, recover_centerline, residuals
from .solver import RotationField, SolverOptions, SolveTrace, energy, gradient, hessian_min_eig, init_field, solve
from .xsection import Material, SectionGeometry, StiffnessForm, compute_H, normalize_section, solve_warping, triangulate

__version__ = "0.1.0"
