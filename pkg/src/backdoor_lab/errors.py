"""Exception hierarchy shared by all modules."""


class BackdoorLabError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(BackdoorLabError):
    """Tensor shapes do not satisfy an operation's precondition."""


class ContractError(BackdoorLabError):
    """An API was called in a way its contract forbids."""


class DomainError(BackdoorLabError):
    """A value lies outside an operation's numeric domain."""


class NumericsError(BackdoorLabError):
    """Non-finite values or broken numerics detected; training aborts."""


class FormatError(BackdoorLabError):
    """A file does not match its declared binary format."""


class DataError(BackdoorLabError):
    """Dataset-level problem: degenerate result, bad sizes, count mismatch."""


class ConfigError(BackdoorLabError):
    """Experiment configuration failed validation."""


class CalibrationError(BackdoorLabError):
    """A trained component missed its required quality floor."""
