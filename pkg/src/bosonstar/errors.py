"""Exception hierarchy shared by all modules."""


class BosonStarError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BosonStarError, ValueError):
    """Inconsistent inputs (grid mismatch, bad config key, ...)."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class ParameterError(BosonStarError, ValueError):
    """A numerical parameter is outside its admissible range."""


class InvalidStateError(BosonStarError, ValueError):
    """A field or vector contains non-finite values or violates normalization."""


class CollapseSuspected(BosonStarError, RuntimeError):
    """The H^{1/2} norm of a Hartree orbit crossed the blow-up sentinel."""

    def __init__(self, t, hhalf):
        self.t = t
        self.hhalf = hhalf
        super().__init__(f"H^1/2 norm {hhalf:.3e} exceeded sentinel at t={t:.6g}")


class CapacityError(BosonStarError, MemoryError):
    """A Fock basis would exceed the dimension cap."""

    def __init__(self, M, N, dim, cap):
        self.M, self.N, self.dim, self.cap = M, N, dim, cap
        super().__init__(f"Fock basis (M={M}, N={N}) has dimension {dim} > cap {cap}")


class PropagationError(BosonStarError, RuntimeError):
    """Krylov propagation failed even after step halving."""


class InvariantViolation(BosonStarError, AssertionError):
    """A physics invariant (conservation law, inequality, bound) failed."""
