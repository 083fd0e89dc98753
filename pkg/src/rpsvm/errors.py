"""Exception hierarchy shared across the package."""


class RpsvmError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(RpsvmError, ValueError):
    pass


class CapacityError(RpsvmError):
    """Input exceeds a desk-scale size cap."""


class DegenerateProblemError(RpsvmError, ValueError):
    pass


class UndefinedMarginError(RpsvmError, ArithmeticError):
    pass


class BoundVacuousError(RpsvmError, ArithmeticError):
    """The measured discrepancy is too large for the bound to say anything."""


class ParseError(RpsvmError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
