"""Exception taxonomy shared across the package."""


class PrunasError(Exception):
    """Base class for all package errors."""


class DimensionError(PrunasError, ValueError):
    """Tensor shapes disagree with an operation's contract."""


class ConfigurationError(PrunasError, ValueError):
    """Invalid search-space or search configuration."""


class DataError(PrunasError, ValueError):
    """Malformed dataset rows or labels."""


class DomainError(PrunasError, ValueError):
    """Numeric argument outside an operation's domain (e.g. log of <= 0)."""


class EngineError(PrunasError, ArithmeticError):
    """Non-finite values produced inside the tensor engine."""


class LatencyTableError(PrunasError, KeyError):
    """Missing or inconsistent latency lookup-table entries."""


class ScheduleError(PrunasError, ValueError):
    """Pruning schedule queried outside its active range."""


class InvariantViolation(PrunasError, RuntimeError):
    """A structural invariant that should be unreachable was violated."""
