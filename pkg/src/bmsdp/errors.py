"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes do not match the problem dimensions."""


class InfeasibleError(RuntimeError):
    """No feasible point is available or a point violates the constraints."""


class RetractionError(RuntimeError):
    """The retraction could not map a tangent step back onto the manifold.

    The trust-region loop treats this as a rejected step; callers outside the
    loop should retry with a shorter step.
    """


class NotTangentError(ValueError):
    """A vector handed to a tangent-space operation is not tangent."""


class DependentConstraintsError(ValueError):
    """The constraint matrices are linearly dependent.

    ``combination`` holds coefficients c with sum_i c_i A_i ~ 0.
    """

    def __init__(self, message, combination=None):
        super().__init__(message)
        self.combination = combination


class ExtractionError(RuntimeError):
    """A rank-one solution could not be recovered from the factor."""


class FormatError(ValueError):
    """Malformed problem, factor or report document.

    ``path`` names the offending JSON field, e.g. ``"A[2].triplets[0]"``.
    """

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
