"""Exception hierarchy shared by all cavjar modules."""


class CavjarError(Exception):
    """Base class for every error raised by cavjar."""


class TruncationError(CavjarError):
    """The truncated Fock space is too small for the requested object."""


class NumericalError(CavjarError):
    """A non-finite value appeared in an intermediate result."""


class RangeError(CavjarError, ValueError):
    """A physical parameter lies outside the numerically certified window."""


class DomainError(CavjarError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class ConvergenceError(CavjarError):
    """An iterative or step-doubling scheme failed to converge."""


class FitError(CavjarError):
    """A fringe record could not be fitted consistently."""


class DegenerateError(CavjarError, ValueError):
    """The visibility relation degenerates (thermal visibility equals one)."""
