"""Exception types shared across the package."""


class LabError(Exception):
    """Base class for all errors raised by logsob_lab."""


class DomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(LabError, ValueError):
    """An operation was called with inputs that violate its preconditions."""


class CapacityError(LabError, MemoryError):
    """A requested discretization exceeds the configured size budget."""


class ConfigError(LabError, ValueError):
    """A scenario configuration file could not be parsed or validated."""
