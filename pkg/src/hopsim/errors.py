"""Exception hierarchy shared by all modules.

The CLI maps the three families onto exit codes: configuration problems
(2), file/format problems (3) and numerical failures (4).
"""


class HopError(Exception):
    """Base class for every error raised by hopsim."""


class ConfigError(HopError, ValueError):
    """Invalid parameters or flags."""


class DomainError(ConfigError):
    """An argument lies outside the domain of an operation."""


class DimensionError(ConfigError):
    """Shapes or lengths of the arguments disagree."""


class RangeError(DomainError):
    """A requested value is outside what the device can realize."""

    def __init__(self, message, lo, hi):
        super().__init__(f"{message} (achievable range [{lo:.6g}, {hi:.6g}])")
        self.lo = lo
        self.hi = hi


class UnknownKernelError(ConfigError, LookupError):
    pass


class UsageError(ConfigError):
    """An object was used before it was ready (e.g. an untrained equalizer)."""


class StatisticsError(ConfigError):
    """Too few samples for a meaningful statistic."""


class FormatError(HopError):
    """Malformed or truncated input file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(HopError, ArithmeticError):
    """A computation produced a non-finite or otherwise unusable result."""


class SignalCorruptionError(NumericalError):
    pass


class TrainingDivergedError(NumericalError):
    pass
