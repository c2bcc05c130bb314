"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by lsrkit."""


class DataError(ToolkitError):
    """Input data violates a documented requirement (duplicate ids, missing fields...)."""


class ParseError(ToolkitError):
    """A file could not be parsed. Carries path and 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:" if line is None else f"{path}:{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class MissingRecordError(ToolkitError, KeyError):
    """A lookup by id failed. The message names the offending id."""


class ContractError(ToolkitError, ValueError):
    """A caller violated an operation precondition (shape/length mismatch etc.)."""
