"""Exception types shared across the package."""


class PatchdiffError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PatchdiffError, ValueError):
    """A model or experiment configuration is malformed or was not validated."""


class DomainError(PatchdiffError, ValueError):
    """An argument lies outside the domain of the operation."""


class AdmissibilityError(PatchdiffError, ValueError):
    """The population scale N is not admissible for the model."""


class UnsupportedDriftError(ConfigurationError):
    """The operation needs a polynomial (or affine) drift and did not get one."""


class InvariantError(PatchdiffError, RuntimeError):
    """An internal invariant was violated during a computation."""
