"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 2 and
:class:`ConvergenceError` to exit code 3.
"""


class CellSieveError(Exception):
    """Base class for all package errors."""


class InputError(CellSieveError, ValueError):
    """Malformed or inconsistent input (shapes, files, parameters)."""


class ConvergenceError(CellSieveError, RuntimeError):
    """An iterative solver hit its iteration cap."""
