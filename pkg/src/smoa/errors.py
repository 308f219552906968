"""Exception taxonomy shared across the package.

The three subclasses map onto the CLI exit codes: validation failures
exit 1, numerical failures exit 2, file/format failures exit 3.
"""


class SmoaError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SmoaError):
    """A configuration or argument violates a documented invariant."""


class NumericalError(SmoaError):
    """A numerical procedure failed (SVD non-convergence, divergence, ...)."""


class FormatError(SmoaError):
    """A file is malformed, truncated, or contains non-finite data."""
