"""
Errors raised by the mkdistance package.
Every domain error is a ValueError so callers written against plain validation errors keep working.
"""


class MKDistanceError(ValueError):
    """Base class of all domain errors."""


class InvalidMeasure(MKDistanceError):
    pass


class AllZeroImage(MKDistanceError):
    pass


class ZeroTotalMass(MKDistanceError):
    pass


class UnbalancedProblem(MKDistanceError):
    pass


class TooLarge(MKDistanceError):
    pass


class OracleMismatch(MKDistanceError):
    pass


class LengthMismatch(MKDistanceError):
    pass


class ShapeMismatch(MKDistanceError):
    pass


class SingularSystem(MKDistanceError):
    pass


class EmptyTrainingSet(MKDistanceError):
    pass


class EmptyTestSet(MKDistanceError):
    pass


class IdxFormatError(MKDistanceError):
    """The file is not a well formed IDX (or PGM) container."""


class BadMagic(IdxFormatError):
    pass


class TruncatedFile(IdxFormatError):
    pass


class DimensionMismatch(IdxFormatError):
    pass


class LabelOutOfRange(IdxFormatError):
    pass


class InsufficientData(MKDistanceError):
    pass


class ConfigError(MKDistanceError):
    pass


class ExperimentError(MKDistanceError):
    pass
