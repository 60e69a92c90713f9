"""Exception hierarchy shared across the toolkit.

``UserInputError`` subclasses map to CLI exit code 1, ``NumericError``
subclasses to exit code 2.
"""


class ConvprobeError(Exception):
    """Base class for all toolkit errors."""


class UserInputError(ConvprobeError):
    """Invalid input supplied by the caller (bad file, bad option, bad data)."""


class WavFormatError(UserInputError):
    """WAV file is malformed or not a format we read."""


class UnsupportedFormatError(UserInputError):
    """WAV file is valid but not mono 8/16-bit PCM or 32-bit float."""


class LengthError(UserInputError):
    """Raw signal does not fit the target length."""

    def __init__(self, msg, overflow=None):
        super().__init__(msg)
        self.overflow = overflow


class StratificationError(UserInputError):
    """A class has too few tokens to split."""


class DimensionError(UserInputError):
    """Tensor shapes are inconsistent with the operation."""


class IntervalError(UserInputError):
    """A phone interval is out of bounds or maps to too few series points."""


class SpecError(UserInputError):
    """A model specification (formula, columns, levels) is invalid."""


class BasisError(SpecError):
    """Too few distinct covariate values for the requested basis."""


class RankError(ConvprobeError):
    """Penalized least-squares system is singular."""

    def __init__(self, msg, aliased=None):
        super().__init__(msg)
        self.aliased = list(aliased) if aliased is not None else []


class NumericError(ConvprobeError):
    """Non-finite values or a numerically degenerate computation."""


class CheckpointError(UserInputError):
    """Checkpoint/container file is malformed or inconsistent."""
