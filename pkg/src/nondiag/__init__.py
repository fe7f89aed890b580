"""Numerical lab for triangular nondiagonal parabolic systems on the triangle u1, u2 >= 0, u1 + u2 <= 1.

Modules: ``coeffmodel`` (coefficient models), ``conditions`` (structural checks),
``regularize`` (epsilon-approximation), ``solver`` (1D finite volumes),
``monitors`` (a-priori quantities), ``analytic`` (closed-form oracles), ``cli``.
"""
from .analytic import JohnStaraField, convergence_study, john_stara_field, js_modulus_profile, shipped_mms_case
from .coeffmodel import CATALOG, CoefficientModel, model_from_catalog, model_from_expressions
from .conditions import CONDITION_IDS, check_all, check_compatibility, check_structural, estimate_ellipticity
from .grid import BoundarySpec, Dirichlet, Grid1D, PrescribedFlux, RobinEps, StateField, TimeController, ZeroFlux
from .regularize import EpsilonScheme, regularize_boundary, robin_flux, transform_data, transform_reaction
from .solver import Discretization, advance, face_flux, residual, restart_from_snapshot, solve

__version__ = "0.1.0"

__all__ = [
    "CATALOG", "CONDITION_IDS", "BoundarySpec", "CoefficientModel", "Dirichlet", "Discretization",
    "EpsilonScheme", "Grid1D", "JohnStaraField", "PrescribedFlux", "RobinEps", "StateField",
    "TimeController", "ZeroFlux", "advance", "check_all", "check_compatibility", "check_structural",
    "convergence_study", "estimate_ellipticity", "face_flux", "john_stara_field", "js_modulus_profile",
    "model_from_catalog", "model_from_expressions", "regularize_boundary", "residual",
    "restart_from_snapshot", "robin_flux", "shipped_mms_case", "solve", "transform_data",
    "transform_reaction",
]
