"""Exception hierarchy shared across the package."""


class HCSAError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(HCSAError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(HCSAError, FloatingPointError):
    """A NaN or Inf appeared in tensor data."""


class InputError(HCSAError, ValueError):
    """Caller-supplied data violates an operation's preconditions."""


class ConfigError(HCSAError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class DatasetError(HCSAError):
    """Base class for on-disk dataset problems."""


class CorruptFileError(DatasetError):
    pass


class ShapeMismatchError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class CheckpointError(HCSAError):
    pass


class TaxonomyError(HCSAError, ValueError):
    pass
