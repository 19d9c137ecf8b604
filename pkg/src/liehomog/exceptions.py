"""Exception hierarchy shared by the library and the CLI."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class EllipticityError(ValidationError):
    """Coefficient field is not strongly elliptic."""


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
