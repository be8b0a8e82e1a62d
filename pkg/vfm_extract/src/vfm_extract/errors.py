"""Exception hierarchy for the extraction tool."""


class VfmError(Exception):
    """Base class for all extraction errors."""


class ModelUnavailable(VfmError):
    """Requested model id is unknown or its weights cannot be loaded."""


class DatasetUnavailable(VfmError):
    """Requested dataset cannot be located or downloaded."""


class IoError(VfmError):
    """Output path is not writable or an input file cannot be read."""


class BadMagic(VfmError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(VfmError):
    """File is shorter than its header implies."""


class NonFiniteEntry(VfmError):
    """Container payload contains NaN or Inf."""
