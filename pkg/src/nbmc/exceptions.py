"""
Exception hierarchy for nbmc.

Library code raises these; only the CLI turns them into exit codes.
"""


class NBMCError(Exception):
    """Base class for all nbmc errors."""

    exit_code = 1


class ParameterError(NBMCError, ValueError):
    """A parameter is outside the domain of the operation."""

    exit_code = 2


class PreconditionError(ParameterError):
    """The sufficient conditions required by an operation do not hold."""


class UnachievableError(NBMCError):
    """A planning target cannot be met (or not within the configured cap)."""

    exit_code = 2


class TermCapError(NBMCError):
    """A summation would need more terms than the configured cap."""

    exit_code = 3

    def __init__(self, terms: int, cap: int):
        super().__init__(f"summation needs {terms} terms, cap is {cap}")
        self.terms = terms
        self.cap = cap


class StreamFormatError(NBMCError):
    """A trial stream line is not '0', '1', blank or a '#' comment."""

    exit_code = 4

    def __init__(self, line_number: int, text: str, source: str = "<stream>"):
        super().__init__(f"{source}:{line_number}: expected '0' or '1', got {text!r}")
        self.line_number = line_number
        self.text = text
        self.source = source


class VerificationError(NBMCError):
    """A numerical verification sweep found a violated inequality."""

    exit_code = 5
