"""Exception hierarchy shared across the package."""


class DagCacheError(Exception):
    """Base class for all errors raised by dagcache."""


class ValidationError(DagCacheError, ValueError):
    """An input violates a structural or numeric invariant."""


class ConsistencyError(ValidationError):
    """Two nodes with equal fingerprints disagree on cost or size."""


class TraceFormatError(ValidationError):
    """A trace file could not be parsed.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CatalogTooLargeError(DagCacheError, ValueError):
    """Exhaustive enumeration refused because the catalog is too big."""


class ConvergenceError(DagCacheError, RuntimeError):
    """Iterative ascent diverged; ``history`` holds the offending values."""

    def __init__(self, message: str, history=None):
        self.history = history
        super().__init__(message)


class ConfigError(DagCacheError, ValueError):
    """Unknown policy name or malformed run configuration."""
