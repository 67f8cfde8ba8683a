"""Exception hierarchy shared across the package.

ValidationError covers bad inputs, bad configuration, and violated
preconditions (CLI exit code 1). ComputationError covers failures that
arise mid-computation, e.g. a singular regression (CLI exit code 2).
"""


class SepsikitError(Exception):
    """Base class for all errors raised by sepsikit."""


class ValidationError(SepsikitError):
    """Invalid argument, configuration, or precondition violation."""


class ComputationError(SepsikitError):
    """A numeric or pipeline stage failed at run time."""
