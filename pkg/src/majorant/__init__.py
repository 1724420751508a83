"""Majorizing kernels, stochastic cascades, Picard solvers and function-space norms
for the Fourier-space Navier-Stokes equations."""
from .errors import (ConfigurationError, DomainError, GeometryError, KernelValidationError,
                     MajorantError, OverflowGuardError, PreconditionError, ResourceBudgetError)
from .kernels import (Kernel, estimate_exponents, exp_damped_kernel, inverse_square_kernel,
                      l1_plus_l2_report, make_product_kernel, power_law_kernel, self_convolve, sharp_constant,
                      standardize, tabulated_kernel)
from .lattice import LatticeField, LatticeGeometry, h_shaped, random_small, single_mode
from .picard import bilinear_term, fh_norm, picard_iterate
from .cascade import ContinuousProblem, LatticeProblem, SplittingLaw, estimate_solution
from .probe import blowup_certificate, chain_constants, chain_sequence, origin_classify, rho
from .spaces import (BallFamily, besov_heat_norm, bmo_minus1_norm, embedding_check, pm_norm,
                     vmo_limit_check)
from .estimators import CascadeSolver, PicardSolver

__all__ = [
    "ConfigurationError", "DomainError", "GeometryError", "KernelValidationError", "MajorantError",
    "OverflowGuardError", "PreconditionError", "ResourceBudgetError",
    "Kernel", "exp_damped_kernel", "estimate_exponents", "l1_plus_l2_report", "inverse_square_kernel",
    "make_product_kernel", "power_law_kernel", "self_convolve", "sharp_constant", "standardize",
    "tabulated_kernel", "LatticeField", "LatticeGeometry", "h_shaped", "random_small", "single_mode",
    "bilinear_term", "fh_norm", "picard_iterate", "ContinuousProblem", "LatticeProblem",
    "SplittingLaw", "estimate_solution", "blowup_certificate", "chain_constants", "chain_sequence",
    "origin_classify", "rho", "BallFamily", "besov_heat_norm", "bmo_minus1_norm", "embedding_check",
    "pm_norm", "vmo_limit_check", "CascadeSolver", "PicardSolver",
]
