"""Exception hierarchy shared across the package."""


class SpinferError(Exception):
    """Base class for all package errors."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class InvalidHyperparameterError(SpinferError, ValueError):
    code = "invalid-hyperparameter"


class EmptyInputError(SpinferError, ValueError):
    code = "empty-input"


class DataError(SpinferError, ValueError):
    code = "data-error"


class InsufficientReplicationError(SpinferError, ValueError):
    code = "insufficient-replication"


class IllConditionedError(SpinferError, ArithmeticError):
    code = "ill-conditioned"

    def __init__(self, message, smallest_pivot=None):
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class InvalidDofError(SpinferError, ValueError):
    code = "invalid-dof"


class OptimizationFailure(SpinferError, RuntimeError):
    code = "optimization-failure"

    def __init__(self, message, best_state=None, diagnostics=None):
        super().__init__(message)
        self.best_state = best_state
        self.diagnostics = diagnostics or {}


class RejectionExhaustedError(SpinferError, RuntimeError):
    code = "rejection-exhausted"

    def __init__(self, message, acceptance_rate=0.0):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class DegenerateTruncationError(SpinferError, ArithmeticError):
    code = "degenerate-truncation"


class BlowUpError(SpinferError, ArithmeticError):
    code = "ode-blow-up"

    def __init__(self, message, time=None, params=None):
        super().__init__(message)
        self.time = time
        self.params = params


class SingularityError(BlowUpError):
    code = "ode-singularity"


class ExtrapolationError(SpinferError, ValueError):
    code = "extrapolation"


class EnsembleQualityError(SpinferError, RuntimeError):
    code = "ensemble-quality"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SchemaError(SpinferError, ValueError):
    code = "schema-mismatch"
