"""Forward heat solver, Laplace-domain reduction and coefficient recovery
for U_t = (a(x) U_x)_x on [0, 1] with piecewise-analytic conductivity."""

from .coefficient import CoefficientError, CoefficientM, DomainError, PiecewisePolynomial, difference, signed
from .heat_forward import BoundarySource, HeatConfig, extract_flux, load_source, solve_heat
from .inverse import ModelSpec, distinguishability_test, reconstruct
from .property_c import completeness_probe, orthogonality_functional, tail_decay_experiment
from .sl_solver import SolverConfig, solve_volterra
from .spectral_reduction import (SpectralData, data_from_time_domain, spectral_data, spectral_forward,
                                 time_domain_data)

__version__ = "0.1.0"

__all__ = [
    "BoundarySource", "CoefficientError", "CoefficientM", "DomainError", "HeatConfig",
    "ModelSpec", "PiecewisePolynomial", "SolverConfig", "SpectralData",
    "completeness_probe", "data_from_time_domain", "difference", "distinguishability_test",
    "extract_flux", "load_source", "orthogonality_functional", "reconstruct", "signed",
    "solve_heat", "solve_volterra", "spectral_data", "spectral_forward", "time_domain_data",
    "tail_decay_experiment", "__version__",
]
