"""Exception types raised by the numerical routines."""


class KKError(Exception):
    """Base class for all package errors."""


class NumericalFailure(KKError):
    """A numerical hypothesis (invertibility, spectral gap, ...) failed."""


class SingularInput(NumericalFailure):
    pass


class EigenvalueAtThreshold(NumericalFailure):
    pass


class SpectralGapFail(NumericalFailure):
    pass


class IndexNotInvertible(NumericalFailure):
    pass


class GramDegenerate(NumericalFailure):
    pass


class NotInRange(NumericalFailure):
    pass


class NotUnitary(KKError):
    pass


class NotNested(KKError):
    pass


class ShapeMismatch(KKError):
    pass


class ApproximantTooFar(KKError):
    pass


class InvalidConfig(KKError):
    """Malformed scenario or configuration document."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
