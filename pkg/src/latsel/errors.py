"""Exception hierarchy shared by all latsel modules."""


class LatselError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(LatselError, ValueError):
    pass


class ShapeMismatch(LatselError, ValueError):
    pass


class ProbeUnavailable(LatselError, RuntimeError):
    pass


class AlreadyRunning(LatselError, RuntimeError):
    pass


class MissingFeature(LatselError, KeyError):
    pass


class EmptyDataset(LatselError, ValueError):
    pass


class TooFewRecords(LatselError, ValueError):
    pass


class MalformedHeader(LatselError, ValueError):
    pass


class SchemaMismatch(LatselError, ValueError):
    pass


class DimensionMismatch(LatselError, ValueError):
    pass


class NonFiniteLoss(LatselError, ArithmeticError):
    pass


class VersionMismatch(LatselError, ValueError):
    pass


class ChecksumFailure(LatselError, ValueError):
    pass


class LengthMismatch(LatselError, ValueError):
    pass


class NonPositiveTruth(LatselError, ValueError):
    pass


class ZeroVariance(LatselError, ValueError):
    pass


class EmptyResults(LatselError, ValueError):
    pass


class DuplicatePair(LatselError, ValueError):
    pass


class UnknownModule(LatselError, KeyError):
    pass


class MissingInput(LatselError, FileNotFoundError):
    """A model file or evaluation report that a command depends on does not exist."""
