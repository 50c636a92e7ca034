"""Numerical lab for minimal intrinsic graphs in the Heisenberg group."""

__version__ = "0.1.0"

from .geometry import GridDomain, HorizontalGradient, ScalarField, apply_field, horizontal_gradient
from .variational import area, mean_curvature, mean_curvature_nondiv, prescribed_functional, weak_residual
from .stability import assemble_stability, check_maximum_principle, first_eigenvalue, index_form
from .solver import SolveReport, SolverConfig, solve_dirichlet, solve_perturbed
from .foliation import build_foliation, calibration_compare, generate_competitor
from .metric import ball_volume_exponent, c2alpha_norm, cc_distance, holder_norm
from .io import export_field, import_field

__all__ = [
    "GridDomain", "HorizontalGradient", "ScalarField", "apply_field", "horizontal_gradient",
    "area", "mean_curvature", "mean_curvature_nondiv", "prescribed_functional", "weak_residual",
    "assemble_stability", "check_maximum_principle", "first_eigenvalue", "index_form",
    "SolveReport", "SolverConfig", "solve_dirichlet", "solve_perturbed",
    "build_foliation", "calibration_compare", "generate_competitor",
    "ball_volume_exponent", "c2alpha_norm", "cc_distance", "holder_norm",
    "export_field", "import_field",
]
