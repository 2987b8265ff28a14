"""
Exception hierarchy for FLUXEMD.

Every error raised on purpose by the package derives from FluxEMDError, so
callers (and the CLI) can catch one base class and map subclasses to exit
codes.
"""
from typing import Optional


class FluxEMDError(Exception):
    """Base class for all FLUXEMD errors."""


class InvalidMeasureError(FluxEMDError):
    """A density is negative, all zero, or not normalized."""


class IncompatibleFieldsError(FluxEMDError):
    """Fields live on different grids or have inconsistent shapes."""


class DimensionMismatchError(IncompatibleFieldsError):
    """Points or measures of different spatial dimension were combined."""


class ConfigurationError(FluxEMDError):
    """Invalid solver or example parameters."""


class StepSizeError(ConfigurationError):
    """tau * mu * ||K||^2 >= 1 while strict step checking is enabled."""


class NumericalDivergenceError(FluxEMDError):
    """NaN or Inf showed up in the iterates."""

    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class OracleError(FluxEMDError):
    """The exact oracle cannot handle the given measures."""


class RationalityError(OracleError):
    """A density is not representable with the requested denominator."""


class DensityFileError(FluxEMDError):
    """A density file could not be parsed."""


class InvalidFluxError(FluxEMDError):
    """A flux violates the zero-flux boundary or holds non-finite values."""
