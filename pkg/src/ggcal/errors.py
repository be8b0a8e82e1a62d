"""Exception hierarchy shared by all ggcal modules."""


class GgcalError(Exception):
    """Base class for every error raised by this package."""


# Container / IO
class BadMagic(GgcalError):
    pass


class TruncatedFile(GgcalError):
    pass


class DimensionMismatch(GgcalError):
    pass


class NonFiniteEntry(GgcalError):
    pass


class IoError(GgcalError):
    pass


# Partitioning
class EmptyClass(GgcalError):
    pass


class InvalidSpec(GgcalError):
    pass


# Geometry
class NotSymmetric(GgcalError):
    pass


class NonFinite(GgcalError):
    pass


class ZeroVector(GgcalError):
    pass


class InvalidSize(GgcalError):
    pass


# Aggregation
class NoSamples(GgcalError):
    pass


class MissingClass(GgcalError):
    pass


# Augmentation
class EmptySource(GgcalError):
    pass


class MissingShape(GgcalError):
    pass


class MissingPrototype(GgcalError):
    pass


# Long-tail
class ZeroCount(GgcalError):
    pass


# Training
class ArchMismatch(GgcalError):
    pass


class NonFiniteLoss(GgcalError):
    pass


class EmptyTestSet(GgcalError):
    pass


# Simulation
class ConfigError(GgcalError):
    pass
