"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input: wrong shapes, out-of-range parameters, malformed files."""


class NumericalError(RuntimeError):
    """A computation ran but failed numerically (non-convergence, infeasible system)."""


class MemoryGuardError(ValidationError):
    """A dense allocation would exceed the configured memory budget."""

    def __init__(self, needed_mb, guard_mb):
        self.needed_mb = needed_mb
        self.guard_mb = guard_mb
        super().__init__(
            f"dense allocation needs ~{needed_mb:.0f} MB, guard is {guard_mb:.0f} MB"
        )


class HypothesisViolatedError(ValidationError):
    """The isometry-ratio condition fails, so the stability constants are undefined."""

    def __init__(self, mu):
        self.mu = mu
        super().__init__(f"stability condition violated: mu = {mu:.6g} >= 1")
