"""Exception hierarchy for the localization and integrity pipeline."""


class LocalizationError(Exception):
    """Base class for all errors raised by this package."""


class BehindCameraError(LocalizationError):
    """A 3D point has non-positive depth in the camera frame."""


class DegenerateSegmentError(LocalizationError):
    """Two endpoints are too close to define a line."""


class InsufficientObservationsError(LocalizationError):
    """Not enough line correspondences to constrain a 6-DoF pose."""


class SingularNormalEquationsError(LocalizationError):
    """The normal-equation matrix is numerically rank deficient."""


class IntegrityUnavailableError(LocalizationError):
    """Fault exclusion could not restore statistical consistency.

    Carries the fault-exclusion report (when one exists) so callers can
    inspect what was tried before the frame was flagged.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NoVisibleLinesError(LocalizationError):
    """No map line survives the visibility cull for a frame."""


class ParseError(LocalizationError):
    """An input file does not conform to its documented format."""


class InvariantViolation(LocalizationError):
    """A loaded or constructed object violates a domain invariant."""


class NoOverlapError(LocalizationError):
    """Timestamp association between two trajectories failed everywhere."""
