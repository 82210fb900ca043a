"""Exception hierarchy shared by all modules."""


class PNormError(Exception):
    """Base class for library errors."""


class StructuralError(PNormError, ValueError):
    """Malformed sparse structure (index out of range, bad offsets)."""


class DimensionError(PNormError, ValueError):
    """Operand shapes do not match."""


class ParseError(PNormError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RankDeficientError(PNormError, ArithmeticError):
    """Matrix is singular to working precision."""


class ContractViolation(PNormError, ValueError):
    """A documented precondition does not hold."""


class DivergenceError(PNormError, ArithmeticError):
    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


class UpdateRejected(PNormError, ArithmeticError):
    """Low-rank update refused; the caller has to rebuild the base inverse."""


class InfeasibleError(PNormError, ValueError):
    """Constraint system has no solution, or the budget cannot be met."""
