"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class ConvergenceError(RuntimeError):
    """An iterative solver (shooting, Newton, bisection) failed to converge."""


class IllPosedSolveError(RuntimeError):
    """A linear solve was requested with a large component in the operator kernel.

    The offending overlap magnitude is stored in ``overlap``.
    """

    def __init__(self, message, overlap):
        super().__init__(f"{message} (kernel overlap {overlap:.3e})")
        self.overlap = overlap


class BranchTrackingError(RuntimeError):
    """Eigenvector-overlap matching between consecutive samples became ambiguous."""

    def __init__(self, message, alpha, overlap):
        super().__init__(f"{message} at alpha={alpha:.6g} (overlap {overlap:.3f})")
        self.alpha = alpha
        self.overlap = overlap


class PhaseLawError(RuntimeError):
    """The phase-speed constant is too large for the requested operation.

    Raised when a denominator of the scaling/operator formulas loses its sign,
    i.e. when the small-speed regime assumed throughout is violated.
    """


class CurveNotCriticalError(RuntimeError):
    """A corrector solve removed a kernel component larger than tolerated.

    Solvability of the odd corrector equation requires the curve to satisfy
    the extremality condition; a large projected-off component means it does
    not.
    """

    def __init__(self, message, removed):
        super().__init__(f"{message} (projected-off component {removed:.3e})")
        self.removed = removed
