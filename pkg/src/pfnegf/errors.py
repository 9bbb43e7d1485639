"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a run configuration cannot be parsed or validated."""


class MemoryBudgetError(RuntimeError):
    """Raised when a computation would exceed the configured memory budget."""
