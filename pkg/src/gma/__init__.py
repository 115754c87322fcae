"""Numerical checks for optimal transport onto the standard Gaussian measure."""

from .density import (
    Density,
    conditional_expectation,
    entropy,
    fisher_info,
    log_density,
    make_gaussian_cov,
    make_mixture_1d,
    make_product,
    make_scaling,
    make_shift,
    make_standard,
    ou_smooth,
)
from .errors import DerivativeUnavailable, EvaluationError, GMAError, InvalidArgument, ResourceLimitError, SolverError
from .identities import CHECK_NAMES, CheckResult, SuiteOptions, run_suite
from .quadrature import QuadratureRule, hermite_rule, tensor_rule
from .transport import TransportMap, invert, solve

__version__ = "0.1.0"

__all__ = [
    "CHECK_NAMES",
    "CheckResult",
    "Density",
    "DerivativeUnavailable",
    "EvaluationError",
    "GMAError",
    "InvalidArgument",
    "QuadratureRule",
    "ResourceLimitError",
    "SolverError",
    "SuiteOptions",
    "TransportMap",
    "conditional_expectation",
    "entropy",
    "fisher_info",
    "hermite_rule",
    "invert",
    "log_density",
    "make_gaussian_cov",
    "make_mixture_1d",
    "make_product",
    "make_scaling",
    "make_shift",
    "make_standard",
    "ou_smooth",
    "run_suite",
    "solve",
    "tensor_rule",
]
