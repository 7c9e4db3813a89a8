"""Exception and warning types raised across the package."""


class CSGanError(Exception):
    """Base class for every error raised by this package."""


class FormatError(CSGanError):
    """An on-disk container is malformed or incomplete."""


class MontageError(CSGanError):
    """Channel layout does not match the declared montage."""


class SubjectError(CSGanError):
    """A requested subject is not present in the data."""


class SplitError(CSGanError):
    """A requested split cannot be produced from the available trials."""


class FilterError(CSGanError):
    """Invalid filter design parameters."""


class ShapeError(CSGanError, ValueError):
    """Array shapes are incompatible with the operation."""


class ConfigError(CSGanError, ValueError):
    """Invalid configuration value."""


class DegenerateEpochError(CSGanError):
    """An epoch carries no energy, so its normalized covariance is undefined."""


class EmptyClassError(CSGanError):
    """A class required by the operation has no trials."""


class InsufficientDataError(CSGanError):
    """Too few trials for the requested statistic."""


class RankError(CSGanError):
    """A composite covariance is too rank-deficient to whiten."""


class NumericalError(CSGanError):
    """A non-finite value appeared where a finite one is required."""


class TrainingDivergedError(CSGanError):
    """Training produced a non-finite loss.

    Attributes
    ----------
    checkpoint : object or None
        The last state recorded before divergence, when available.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class EvalError(CSGanError):
    """Evaluation cannot be carried out (e.g. empty test set)."""


class DegenerateTestError(CSGanError):
    """A statistical test is undefined for the supplied samples."""


class LeakageError(CSGanError):
    """Held-out test trials reached a fitting step."""


class InsufficientVarianceWarning(UserWarning):
    """A dispersion statistic is exactly zero."""
