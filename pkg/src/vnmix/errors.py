"""Exception hierarchy shared by all vnmix modules."""


class VnmixError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(VnmixError, ValueError):
    """Input failed a structural or domain check."""


class EmptyAlgebra(ValidationError):
    pass


class DimensionZero(ValidationError):
    pass


class NonPositiveWeight(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class NotPositive(ValidationError):
    pass


class NegativeBudget(ValidationError):
    pass


class NotUnitary(ValidationError):
    pass


class BadProbability(ValidationError):
    pass


class DimensionTooSmall(ValidationError):
    pass


class NotCertified(VnmixError):
    """The map lacks the positivity or contraction certificate an analysis needs."""


class NotCertifiedPositive(NotCertified):
    pass


class AnalysisError(VnmixError):
    """An analysis ran but could not produce a sound verdict."""


class SpuriousExpansion(AnalysisError):
    pass


class DichotomyFailure(AnalysisError):
    """Neither decay nor a positive fixed point was found within budget.

    ``instance`` carries a serializable description of the failing input.
    """

    def __init__(self, message, instance=None):
        super().__init__(message)
        self.instance = instance or {}


class ParseError(VnmixError):
    def __init__(self, message, line=None, column=None):
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(message + where)
        self.line = line
        self.column = column


class SuiteInvariantViolation(AnalysisError):
    def __init__(self, message, points=()):
        super().__init__(message)
        self.points = list(points)
