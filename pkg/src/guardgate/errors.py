"""Exception types with stable, machine-readable error codes."""

from __future__ import annotations


class GuardgateError(Exception):
    """Base class for all errors raised by this package.

    ``code`` is a stable identifier safe to match on programmatically;
    the exception message is free-form and may change.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code

    def __str__(self) -> str:
        return f"{self.code}: {super().__str__()}"


class ValidationError(GuardgateError):
    """A request or argument failed input validation."""


class PolicyLoadError(GuardgateError):
    """A policy document was rejected.  Carries position info when known."""

    def __init__(self, code: str, message: str, *, line: int | None = None,
                 column: int | None = None):
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{message} ({where})"
        super().__init__(code, message)
        self.line = line
        self.column = column


class StoreError(GuardgateError):
    """The artifact store refused or failed an operation."""


class ConfigError(GuardgateError):
    """Service configuration is unusable."""

    def __init__(self, message: str):
        super().__init__("CONFIG_INVALID", message)
