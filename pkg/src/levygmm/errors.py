"""Exception types raised across the package."""


class LevyGmmError(Exception):
    """Base class for package errors."""


class ParameterError(LevyGmmError, ValueError):
    """A parameter lies outside its admissible set."""


class AlphaOneError(ParameterError):
    """Stability index equal to 1, which the stable parametrization excludes."""


class InversionCutoffError(LevyGmmError):
    """No frequency cutoff makes the characteristic function negligible."""


class GridResolutionError(LevyGmmError):
    """A numerical grid is too coarse for the requested accuracy."""


class QuadratureError(LevyGmmError):
    """Adaptive quadrature failed to reach its tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class HypothesisMismatchError(LevyGmmError, ValueError):
    """A moment function does not satisfy the hypotheses of the requested case."""


class IdentificationError(LevyGmmError):
    """The estimating equation has no root in the admissible bracket."""


class SingularMatrixError(LevyGmmError):
    """A matrix required to be invertible is numerically singular."""


class InsufficientExceedancesError(LevyGmmError):
    """Too few increments exceed a threshold to form a ratio."""


class ExperimentAbortedError(LevyGmmError):
    """A Monte Carlo experiment exceeded its allowed failure rate."""
