"""Exception and warning types raised by shiftguard."""


class ShiftGuardError(Exception):
    """Base class for all shiftguard errors."""


class ModelError(ShiftGuardError, ValueError):
    """Invalid ARMA model specification."""


class NonStationary(ModelError):
    pass


class NonInvertible(ModelError):
    pass


class InsufficientHistory(ShiftGuardError, ValueError):
    pass


class DomainError(ShiftGuardError, ValueError):
    pass


class NonConvergence(ShiftGuardError, ArithmeticError):
    pass


class NotPositiveDefinite(ShiftGuardError, ValueError):
    pass


class NonFiniteInput(ShiftGuardError, ValueError):
    pass


class DetectorSignalled(ShiftGuardError, RuntimeError):
    """Raised when updating a chart that already signalled and was not reset."""


class BudgetError(ShiftGuardError, RuntimeError):
    """Base for compute-budget failures (CLI exit code 3)."""


class RejectionBudgetExceeded(BudgetError):
    pass


class BudgetExceeded(BudgetError):
    pass


class RunLengthCapExceeded(BudgetError):
    pass


class NoBracket(BudgetError):
    pass


class DimensionTooLarge(ShiftGuardError, ValueError):
    pass


class UncalibratedMethod(ShiftGuardError, ValueError):
    pass


class TruncationWarning(UserWarning):
    """AR representation hit its order cap before the tail fell below tolerance."""


class ConfigError(ShiftGuardError, ValueError):
    """Run configuration is malformed or inconsistent."""
