"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures without
a lookup table: 2 for usage/validation, 3 for numerical failures, 4 for I/O.
"""

from __future__ import annotations


class QFTSError(Exception):
    exit_code = 2


class ValidationError(QFTSError, ValueError):
    """Input violates a documented precondition."""

    exit_code = 2


class NumericalError(QFTSError, ArithmeticError):
    exit_code = 3


class FormatError(QFTSError, OSError):
    """A data file could not be parsed or does not match its schema."""

    exit_code = 4


# spectral_core
class DimensionalMismatchError(ValidationError):
    pass


class InvalidInputError(ValidationError):
    pass


class InvalidGridError(ValidationError):
    pass


class PeakTruncatedError(NumericalError):
    pass


class WidthUndefinedError(NumericalError):
    pass


# jsa_models / interference
class InsufficientSupportError(ValidationError):
    pass


class GridAsymmetryError(ValidationError):
    pass


class AsymmetricSpectrumError(ValidationError):
    pass


class AsymmetricSpectrumWarning(UserWarning):
    pass


# reconstruction
class AliasingRiskError(NumericalError):
    pass


class EmptySpectrumError(NumericalError):
    pass


# fitting
class UnderconstrainedError(NumericalError):
    pass


class DipNotFoundError(NumericalError):
    pass


# coincidence_sim
class ModelValidityError(ValidationError):
    pass


class MissingSeedError(ValidationError):
    pass


class PeakOverlapError(ValidationError):
    pass


class InsufficientSidePeaksError(ValidationError):
    pass


class SuspiciousSubtractionWarning(UserWarning):
    pass
