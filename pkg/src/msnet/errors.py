"""Exception hierarchy shared across the package.

``ValidationError`` marks bad input; ``InfeasibleError`` marks inputs that are
well-formed but for which the requested object does not exist.
"""


class ValidationError(ValueError):
    pass


class InfeasibleError(ArithmeticError):
    pass


class CancellationError(InfeasibleError):
    """Unstable pole-zero cancellation between two loop components."""


class MarginalError(InfeasibleError):
    """A root that matters sits on the unit circle."""


class NotStabilizableError(InfeasibleError):
    pass
