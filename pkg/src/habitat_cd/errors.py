"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`OracleViolation` to exit code 3.
"""


class HabitatCDError(Exception):
    """Base class for all package errors."""


class ValidationError(HabitatCDError, ValueError):
    """Invalid input: bad arguments, malformed files, misaligned grids."""


class OracleViolation(HabitatCDError):
    """An internal cross-check between two independent computations failed."""
