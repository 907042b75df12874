class HbtError(Exception):
    """Base class for simulator errors."""


class ConfigurationError(HbtError, ValueError):
    """
    Raised when an apparatus configuration violates one of its invariants.

    Attributes:
        invariant: Short name of the first violated invariant
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        message = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(message)


class GridCoverageError(HbtError, ValueError):
    """Raised when a detector aperture extends past the sampled field grid."""


class HistogramError(HbtError, ValueError):
    """Raised for inconsistent histogram binning or empty estimator windows."""


class EstimationError(HbtError, ValueError):
    """Raised when an estimator cannot be formed from the supplied data."""


class MalformedCsvError(HbtError, ValueError):
    """Raised when a CSV file does not have one of the known layouts."""
