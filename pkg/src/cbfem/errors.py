"""Exception hierarchy shared by the pricing engine."""


class CbfemError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(CbfemError, ValueError):
    """Invalid contract, market or numerical configuration."""


class DomainError(CbfemError, ValueError):
    """An argument lies outside the domain of an operation."""


class SingularSystemError(CbfemError, ArithmeticError):
    """A linear solve or Newton derivative hit a (near) zero pivot."""

    def __init__(self, message, step=None, iteration=None):
        if step is not None or iteration is not None:
            message = f"{message} (time step {step}, Newton iteration {iteration})"
        super().__init__(message)
        self.step = step
        self.iteration = iteration


class NewtonConvergenceError(CbfemError, RuntimeError):
    """Newton iteration hit its iteration cap."""

    def __init__(self, message, iterations=None, residual=None, step=None):
        details = []
        if step is not None:
            details.append(f"time step {step}")
        if iterations is not None:
            details.append(f"{iterations} iterations")
        if residual is not None:
            details.append(f"residual {residual:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.step = step
