"""Exception types shared across the package.

The CLI maps these onto exit codes: config problems exit 2, resource
limits exit 3, failed verification assertions exit 1.
"""


class GlauberLabError(Exception):
    """Base class for package errors."""


class InvalidInputError(GlauberLabError, ValueError):
    """A parameter or argument is outside the documented domain."""


class ResourceLimitError(GlauberLabError):
    """A node budget, state-space cap, or depth cap was exceeded."""


class ConfigError(GlauberLabError, ValueError):
    """A CLI / experiment configuration failed validation."""


class NonConvergenceError(GlauberLabError):
    """An iterative solver ran out of iterations before reaching tolerance."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DegenerateOperatorError(GlauberLabError):
    """The requested spectral object does not exist for this instance
    (e.g. the non-backtracking operator of a forest is nilpotent)."""


class CheckFailure(GlauberLabError):
    """A verification battery assertion failed (CLI exit code 1)."""
