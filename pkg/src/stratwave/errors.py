"""Exception types shared across the solver modules."""


class ProfileError(ValueError):
    """Inconsistent or inadmissible stratification profile data."""


class ConvergenceError(RuntimeError):
    """An iterative solver (Picard, Newton, bisection) failed to converge."""


class IntegratorError(RuntimeError):
    """Adaptive ODE integration failed (step-size underflow etc.)."""


class InvalidStateError(RuntimeError):
    """A state left the admissible regime (nonpositive radicand, h_p+H' <= 0, ...)."""


class BracketError(RuntimeError):
    """A root bracket could not be established."""
