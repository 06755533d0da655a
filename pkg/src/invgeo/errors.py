"""Exception hierarchy shared by the library and the CLI."""


class InvGeoError(Exception):
    """Base class for all package errors."""


class InputError(InvGeoError, ValueError):
    """Invalid user input (bad parameters, malformed files, unmet preconditions)."""


class NumericalError(InvGeoError, ArithmeticError):
    """A numerical routine failed (e.g. Cholesky factorization after jitter)."""


class CapabilityError(InputError):
    """The requested method cannot handle the given problem."""


class PackingInfeasibleError(InputError):
    """Sequential inhibition ran out of admissible lattice points."""

    def __init__(self, placed, requested, delta):
        self.placed = placed
        self.requested = requested
        self.delta = delta
        super().__init__(
            f"inhibition packing infeasible: placed {placed} of {requested} points "
            f"with minimum distance {delta}"
        )


class SingularityWarning(RuntimeWarning):
    """Covariance matrix is (numerically) rank deficient."""
