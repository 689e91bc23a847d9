"""
Exception hierarchy for survfusion.

Every error carries an ``exit_code`` used by the command-line surface:
2 configuration, 3 I/O and file formats, 4 degenerate data, 5 dimensions.
"""


class SurvfusionError(Exception):
    """Base class for all survfusion errors."""

    exit_code = 1


# Configuration

class ConfigError(SurvfusionError, ValueError):
    exit_code = 2


class InvalidSpecError(ConfigError):
    """A SyntheticSpec (or another spec model) violates its invariants."""


class MissingModalityError(ConfigError):
    """A strategy needs an embedding modality the cohort does not provide."""


# I/O and file formats

class CohortIOError(SurvfusionError):
    exit_code = 3


class MissingFileError(CohortIOError, FileNotFoundError):
    pass


class MalformedRowError(CohortIOError, ValueError):
    """A manifest row could not be parsed. ``row`` is the 1-based data row."""

    def __init__(self, message: str, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DuplicatePatientIdError(CohortIOError, ValueError):
    def __init__(self, patient_id: str):
        self.patient_id = patient_id
        super().__init__(f"duplicate patient_id {patient_id!r}")


class NonFiniteValueError(CohortIOError, ValueError):
    pass


class FileFormatError(CohortIOError, ValueError):
    pass


class BadMagicError(FileFormatError):
    pass


class TruncatedFileError(FileFormatError):
    pass


# Degenerate data

class DegenerateDataError(SurvfusionError, ValueError):
    exit_code = 4


class NoEventsError(DegenerateDataError):
    pass


class NoEventsInBatchError(NoEventsError):
    """Raised for a minibatch without events; the trainer skips the batch."""


class DegenerateTrainSetError(DegenerateDataError):
    pass


class DegenerateValSetError(DegenerateDataError):
    pass


class DegenerateInnerFoldError(DegenerateDataError):
    pass


class NoComparablePairsError(DegenerateDataError):
    pass


class NoPositivesError(DegenerateDataError):
    pass


class NoNegativesError(DegenerateDataError):
    pass


class EmptyInputError(DegenerateDataError):
    pass


class NoCompleteFeaturesError(DegenerateDataError):
    pass


class InfeasibleStratificationError(DegenerateDataError):
    pass


class MissingInnerRecordsError(DegenerateDataError):
    pass


class UnknownLevelError(DegenerateDataError):
    """A clinical feature level has no entry in the point table."""


# Protocol

class LeakageError(SurvfusionError):
    """Patients used for training or tuning also appear in an outer test fold."""


# Shapes

class DimensionMismatchError(SurvfusionError, ValueError):
    exit_code = 5


class LengthMismatchError(DimensionMismatchError):
    pass


class InvalidDimError(DimensionMismatchError):
    pass


__all__ = [name for name in dir() if name.endswith("Error")]
