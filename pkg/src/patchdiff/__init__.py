"""Patch-structured Wright-Fisher model: chain, diffusion limit, polynomial
semigroups and absorption experiments."""

__version__ = "0.1.0"

from .errors import (AdmissibilityError, ConfigurationError, DomainError, InvariantError,
                     PatchdiffError, UnsupportedDriftError)
from .model import (BoundaryInfo, LinearExchange, ModelSpec, Tabulated, boundary_info,
                    drift_eval, exchange_eval, fichera_eval, make_model, validate_model)
from .polynomial import Polynomial, parse_polynomial

__all__ = [
    "AdmissibilityError", "ConfigurationError", "DomainError", "InvariantError", "PatchdiffError",
    "UnsupportedDriftError", "BoundaryInfo", "LinearExchange", "ModelSpec", "Tabulated",
    "boundary_info", "drift_eval", "exchange_eval", "fichera_eval", "make_model", "validate_model",
    "Polynomial", "parse_polynomial",
]
