"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit status 2 and
:class:`NumericError` to exit status 3.
"""


class CrowdKGError(Exception):
    """Base class for all library errors."""


class DomainError(CrowdKGError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ValidationError(CrowdKGError, ValueError):
    """A configuration, file or request failed validation."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapExceededError(ValidationError):
    """The exact dynamic program would enumerate more states than allowed."""

    def __init__(self, estimate, cap):
        self.estimate = estimate
        self.cap = cap
        super().__init__(
            f"dynamic program needs ~{estimate} (state, budget) nodes, cap is {cap}"
        )


class NumericError(CrowdKGError, ArithmeticError):
    """An iterative numerical routine failed to converge or lost definiteness."""

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class ExhaustedError(CrowdKGError, LookupError):
    """A replay pool has no labels left for the requested action."""


class NoActionError(CrowdKGError):
    """The action set is empty."""
