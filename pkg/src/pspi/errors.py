"""Exception types shared across the package."""


class PspiError(Exception):
    pass


class InvalidModelError(PspiError, ValueError):
    """Raised when an MDP model or document fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"invalid model ({len(self.violations)} violation(s)):\n{lines}")


class DimensionError(PspiError, ValueError):
    pass


class InadmissibleActionError(PspiError, ValueError):
    pass


class EvaluationError(PspiError, RuntimeError):
    """The linear solve for a policy value failed; indicates a defect, not bad input."""


class IterationLimitError(PspiError, RuntimeError):
    """An iterative procedure hit its iteration budget.

    Carries whatever partial result exists: the last iterate and residual for
    fixed-point evaluation, or the partial trace for a solver.
    """

    def __init__(self, message, *, iterate=None, residual=None, trace=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.trace = trace


class EnumerationCapError(PspiError, ValueError):
    pass


class EmptyPolicySetError(PspiError, ValueError):
    pass


class InvariantError(PspiError, AssertionError):
    """An internal guarantee (monotonicity, hypothesis of a theorem) was breached."""


class MonotonicityError(InvariantError):
    pass


class EvaluatorError(PspiError, RuntimeError):
    def __init__(self, message, candidate):
        super().__init__(message)
        self.candidate = candidate
