"""Exception hierarchy shared across the package."""


class PriPlusError(Exception):
    """Base class for all package errors."""


class ConfigError(PriPlusError):
    """Invalid or inconsistent configuration / input data (CLI exit code 2)."""


class ScriptParseError(ConfigError):
    """A query script could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(PriPlusError):
    """A caller broke an operation's precondition at runtime."""
