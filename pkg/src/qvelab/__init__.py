"""qvelab: the quadratic vector equation on the complex upper half-plane.

Solves ``-1/m(z) = z + a + S m(z)`` for discrete models, extracts the
generating density and its spectral diagnostics, classifies edges, cusps
and interior minima against the universal shape functions, verifies
stability bounds for perturbed equations, performs symmetric (Sinkhorn)
scaling at the origin, and cross-checks everything against sampled
Wigner-type random matrices.
"""

__version__ = "0.1.0"

from .errors import QVEError, NumericError, ValidationError
from .model import (
    ModelSpec,
    StructuralReport,
    build_model,
    gamma_function,
    is_fully_indecomposable,
    model_from_json,
    model_to_json,
    primitivity_constants,
    semicircle_model,
    sigma_bound,
    structural_report,
    two_block,
    two_block_critical_delta,
)
from .solver import (
    GridSolution,
    Solution,
    SolverConfig,
    check_structural_bounds,
    contraction_certificate,
    qve_residual,
    solve_fixed_point,
    solve_grid,
    solve_newton,
    solve_point,
)
from .spectral import (
    SpectralData,
    build_B,
    build_F,
    binv_norms,
    cubic_coefficients,
    sigma_psi,
    smallest_eigenpair_B,
    spectral_data,
    spectral_operators,
    top_eigenpair,
    verify_F_identity,
)
from .shape import (
    CardanoRoots,
    ShapeFit,
    SupportProfile,
    cardano_neg,
    cardano_pos,
    classify_minimum,
    detect_support,
    fit_exponent,
    fit_shape,
    gap_estimate,
    psi_edge,
    psi_min,
)
from .stability import (
    PerturbationResult,
    StabilityParams,
    cubic_check,
    holder_check,
    solve_perturbed,
    stability_params,
    t_vectors,
)
from .scaling import (
    ScalingResult,
    diagnose_scalability,
    has_total_support,
    j_functional,
    scale_symmetric,
)
from .rmt import (
    EnsembleSpec,
    LocalLawReport,
    empirical_vs_qve,
    locallaw_residuals,
    sample,
)
from .estimators import DensityOfStates, SymmetricSinkhorn

__all__ = [
    "__version__",
    "QVEError",
    "NumericError",
    "ValidationError",
    "ModelSpec",
    "StructuralReport",
    "build_model",
    "gamma_function",
    "is_fully_indecomposable",
    "model_from_json",
    "model_to_json",
    "primitivity_constants",
    "semicircle_model",
    "sigma_bound",
    "structural_report",
    "two_block",
    "two_block_critical_delta",
    "GridSolution",
    "Solution",
    "SolverConfig",
    "check_structural_bounds",
    "contraction_certificate",
    "qve_residual",
    "solve_fixed_point",
    "solve_grid",
    "solve_newton",
    "solve_point",
    "SpectralData",
    "build_B",
    "build_F",
    "binv_norms",
    "cubic_coefficients",
    "sigma_psi",
    "smallest_eigenpair_B",
    "spectral_data",
    "spectral_operators",
    "top_eigenpair",
    "verify_F_identity",
    "CardanoRoots",
    "ShapeFit",
    "SupportProfile",
    "cardano_neg",
    "cardano_pos",
    "classify_minimum",
    "detect_support",
    "fit_exponent",
    "fit_shape",
    "gap_estimate",
    "psi_edge",
    "psi_min",
    "PerturbationResult",
    "StabilityParams",
    "cubic_check",
    "holder_check",
    "solve_perturbed",
    "stability_params",
    "t_vectors",
    "ScalingResult",
    "diagnose_scalability",
    "has_total_support",
    "j_functional",
    "scale_symmetric",
    "EnsembleSpec",
    "LocalLawReport",
    "empirical_vs_qve",
    "locallaw_residuals",
    "sample",
    "DensityOfStates",
    "SymmetricSinkhorn",
]
