"""Exception hierarchy shared by all modules (the CLI maps these to exit codes)."""


class VolpresError(Exception):
    pass


class DomainError(VolpresError, ValueError):
    """Input lies outside the mathematical domain of an operation (e.g. det A <= 0)."""


class PreconditionError(VolpresError, ValueError):
    """A documented precondition of a bound or experiment does not hold."""


class SolverError(VolpresError, RuntimeError):
    """An iterative solver failed to converge.

    ``residual`` carries the last residual norm and ``state`` the last
    iterate (or any other payload useful for diagnosis).
    """

    def __init__(self, message, residual=None, state=None):
        super().__init__(message)
        self.residual = residual
        self.state = state
