class FictitiousPlayError(Exception):
    """Base class for every error raised by the fpdyn packages."""

    exit_code = 1


class ParameterError(FictitiousPlayError, ValueError):
    exit_code = 2


class StructuralError(FictitiousPlayError):
    exit_code = 2


class DomainError(FictitiousPlayError):
    """Raised when a point lies outside the simplex (or its image).

    Args:
        message: human readable description.
        solution: the offending (unnormalized) solution, when there is one.
    """

    exit_code = 3

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ExistenceError(FictitiousPlayError):
    exit_code = 3


class SearchError(FictitiousPlayError):
    exit_code = 3


class PreconditionError(FictitiousPlayError):
    exit_code = 4


class AmbiguityError(FictitiousPlayError):
    """The flow is not uniquely defined at the current state."""

    exit_code = 4

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class NonUniquenessError(AmbiguityError):
    pass


class ClassificationError(FictitiousPlayError):
    exit_code = 4


class ModelError(FictitiousPlayError):
    exit_code = 4


class InvariantError(FictitiousPlayError):
    exit_code = 4
