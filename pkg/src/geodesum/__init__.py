"""
geodesum - numerical checks of the summation formulae for Fourier
coefficients of eigenfunctions along closed geodesics of hyperbolic manifolds.

Test functions and transforms:
    from geodesum import PhiT, ModelParams, build_psi, lhs_weight

    psi = build_psi()                  # psi >= 0 with psi_hat >= 1 on [-1, 1]
    phi = PhiT(4.0, psi)
    lhs_weight(phi, ModelParams(2, 0.0, 1.0), k=3)

Geometric side:
    from geodesum import beta_fn, r_phi_direct, r_phi_kernel

    beta_fn(0.0, 3)                    # pi/2
    r_phi_direct(phi, 1.0, 3)          # ~ r_phi_kernel(phi, 1.0, 3)

Summation harness:
    from geodesum import load_coeffs, load_spectral, sumcheck

    report = sumcheck(load_coeffs("a.json"), load_spectral("s.json"), phi, params)
"""

from importlib.metadata import version

__version__ = version("geodesum")

from .config import Tolerances, default_tolerances
from .exceptions import (
    BadParam,
    CoincidentArguments,
    ConstructionFailure,
    DegenerateWindow,
    DimensionMismatch,
    GeodesumError,
    GridResolution,
    NearSingular,
    NonConvergence,
    NonFinite,
    ParseError,
    PoleError,
    RegionResolutionError,
    ValidationError,
)
from .kernels import (
    OmegaRegion,
    beta_fn,
    beta_fn_quadrature,
    f_T,
    f_T_monte_carlo,
    f_T_prime,
    f_T_prime_terms,
    f_T_transform,
    jacobian_check_d2,
    jacobian_check_d3,
    kernel_K,
    kernel_K_closed,
    r_phi_closed_d2,
    r_phi_direct,
    r_phi_kernel,
)
from .quadcore import (
    Quadrature1DSpec,
    compensated_sum,
    integrate_1d,
    integrate_2d,
    integrate_oscillatory,
    log_gamma,
    volume_unit_ball,
)
from .spectra import (
    GrowthFit,
    SpectralDataset,
    SpectralEntry,
    decay_fit,
    load_coeffs,
    load_spectral,
    partial_sum_exponent,
    save_coeffs,
    save_spectral,
    triple_growth_check,
    weyl_check,
)
from .summation import (
    SummationReport,
    factorization_check,
    growth_factor,
    lhs_sum,
    rhs_sum_d2,
    rhs_sum_general,
    sumcheck,
)
from .testfn import BumpPsi, PhiT, SampledFunction, base_bump, build_psi, psi_hat
from .transforms import (
    CoefficientSequence,
    ModelParams,
    intertwine_Ik,
    lhs_weight,
    w_hat,
)

__all__ = [
    "BadParam",
    "BumpPsi",
    "CoefficientSequence",
    "CoincidentArguments",
    "ConstructionFailure",
    "DegenerateWindow",
    "DimensionMismatch",
    "GeodesumError",
    "GridResolution",
    "GrowthFit",
    "ModelParams",
    "NearSingular",
    "NonConvergence",
    "NonFinite",
    "OmegaRegion",
    "ParseError",
    "PhiT",
    "PoleError",
    "Quadrature1DSpec",
    "RegionResolutionError",
    "SampledFunction",
    "SpectralDataset",
    "SpectralEntry",
    "SummationReport",
    "Tolerances",
    "ValidationError",
    "__version__",
    "base_bump",
    "beta_fn",
    "beta_fn_quadrature",
    "build_psi",
    "compensated_sum",
    "decay_fit",
    "default_tolerances",
    "f_T",
    "f_T_monte_carlo",
    "f_T_prime",
    "f_T_prime_terms",
    "f_T_transform",
    "factorization_check",
    "growth_factor",
    "integrate_1d",
    "integrate_2d",
    "integrate_oscillatory",
    "intertwine_Ik",
    "jacobian_check_d2",
    "jacobian_check_d3",
    "kernel_K",
    "kernel_K_closed",
    "lhs_sum",
    "lhs_weight",
    "load_coeffs",
    "load_spectral",
    "log_gamma",
    "partial_sum_exponent",
    "psi_hat",
    "r_phi_closed_d2",
    "r_phi_direct",
    "r_phi_kernel",
    "rhs_sum_d2",
    "rhs_sum_general",
    "save_coeffs",
    "save_spectral",
    "sumcheck",
    "triple_growth_check",
    "volume_unit_ball",
    "w_hat",
    "weyl_check",
]
