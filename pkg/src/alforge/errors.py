"""Exception hierarchy shared across the package."""


class AlforgeError(Exception):
    """Base class for all package errors."""


class DataError(AlforgeError):
    """Invalid or inconsistent input data."""


class MalformedLine(DataError):
    """A label/prediction line has the wrong field count or non-numeric fields."""


class OutOfRange(DataError):
    """A coordinate or score lies outside its allowed range."""


class UnknownClass(DataError):
    """A class id exceeds the declared class table."""


class EmptyBins(DataError):
    """A histogram was requested with fewer than two bin edges."""


class EpochOutOfRange(DataError):
    """An epoch index outside [0, total_epochs)."""


class WrongSourceCount(DataError):
    """compose_mosaic received the wrong number of source images."""


class SingularPlacement(DataError):
    """An affine placement with zero scale cannot be inverted."""


class SelectionNotInPool(DataError):
    """A selected image id is not part of the current unlabeled pool."""


class DetectorCoverageGap(DataError):
    """The detector returned no entry for a pooled image."""


class MissingImage(DataError):
    """Strict-mode prediction loading found no file for an expected id."""


class MalformedPredictionLine(MalformedLine):
    """A prediction line is malformed or its score is out of range."""


class ChannelMismatch(DataError):
    """Adjacent blocks in a cost tree disagree on channel counts."""


class ConfigInvalid(DataError):
    """A run/detector configuration failed validation."""
