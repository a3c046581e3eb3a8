"""Exception types. Validation errors map to CLI exit code 2, numerical ones to 3."""


class QSFMError(Exception):
    """Base class for all package errors."""


class ValidationError(QSFMError, ValueError):
    """Bad input: wrong shape, out-of-range parameter, malformed scenario."""


class NumericalError(QSFMError, ArithmeticError):
    """A computation hit a singularity or failed to converge."""


class DimensionError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class IntervalError(ValidationError):
    pass


class UnsupportedSizeError(ValidationError):
    pass


class DegenerateSpectrumError(NumericalError):
    pass


class SingularRatioError(NumericalError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NearZeroProbabilityError(NumericalError):
    def __init__(self, message: str, component: int | None = None):
        super().__init__(message)
        self.component = component


class SingularityError(NumericalError):
    """Encoding singularity during quantum-to-classical synthesis."""

    def __init__(self, message: str, time: float | None = None, component: int | None = None):
        super().__init__(message)
        self.time = time
        self.component = component


class PhaseUndefinedError(NumericalError):
    def __init__(self, message: str, component: int | None = None):
        super().__init__(message)
        self.component = component


class InvalidDensityError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last
