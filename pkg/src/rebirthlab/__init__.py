"""Kernels, path simulation and Monte Carlo verification for rebirthed Markov processes."""
from .errors import (BundleFormatError, ConfigError, DegenerateCovarianceError, DomainError,
                     NumericalFailure, QuadratureError, RebirthLabError)

__version__ = "0.1.0"

__all__ = ["RebirthLabError", "DomainError", "QuadratureError", "NumericalFailure",
           "DegenerateCovarianceError", "ConfigError", "BundleFormatError", "__version__"]
