"""Exception hierarchy shared by all torus_ma modules."""


class TorusMAError(Exception):
    """Base class for all torus_ma errors."""


class InvalidInput(TorusMAError):
    """Non-finite or otherwise malformed input."""


class GridMismatch(TorusMAError):
    """Two grid objects with incompatible dimension or resolution."""


class SizeMismatch(TorusMAError):
    """Configurations or matrices of unequal size."""


class OversizeMatrix(TorusMAError):
    """Permanent requested for a matrix beyond the exact-computation cap."""


class NonFinite(TorusMAError):
    """NaN or infinity where a finite value is required."""


class BetaZero(TorusMAError):
    """Operation undefined at inverse temperature zero."""


class NegativeDeterminant(TorusMAError):
    """Finite-difference Monge-Ampere density non-positive somewhere."""


class NegativeEntry(TorusMAError):
    """Matrix entry negative where non-negative values are required."""


class UnsupportedSize(TorusMAError):
    """Exact computation requested outside the supported (N, n) range."""


class UnsupportedMeasure(TorusMAError):
    """Measure cannot be atomized within the configured atom cap."""


class EmptySampleSet(TorusMAError):
    """Estimator called on a sample set with no configurations."""


class NewtonDivergence(TorusMAError):
    """Newton iteration failed to converge."""


class OutOfWindow(TorusMAError):
    """Argument outside the validity window of a truncated series."""


class NonErgodicWarning(UserWarning):
    """Acceptance rate of an MCMC chain suspiciously low or high."""
