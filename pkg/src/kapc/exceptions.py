"""Exception hierarchy shared by the library and the command line."""


class KapcError(Exception):
    """Base class for all errors raised by kapc."""


class DataError(KapcError, ValueError):
    """Invalid input data, kernel matrices or configuration values."""


class SolverError(KapcError, RuntimeError):
    """A numerical routine could not produce a solution."""


class DegenerateError(SolverError):
    """The problem (or a starting point) has no usable direction."""
