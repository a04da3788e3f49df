"""Exception hierarchy for the particle toolkit."""


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class ModelSpecError(ToolkitError, ValueError):
    """A ModelSpec violates its structural invariants."""


class DomainViolationError(ToolkitError, ValueError):
    """A configuration is not a point of the Weyl chamber."""


class NonFiniteInputError(ToolkitError, ValueError):
    """An input vector contains NaN or infinite entries."""


class MissingDerivativeError(ToolkitError, ValueError):
    """The Milstein scheme was requested without sigma_prime."""


class SolverConvergenceError(ToolkitError):
    """Newton iteration did not reach the gradient tolerance."""

    def __init__(self, message: str, iterations: int = 0, worst_gradient: float = float('nan')):
        super().__init__(message)
        self.iterations = iterations
        self.worst_gradient = worst_gradient


class HessianSolveError(ToolkitError):
    """The barrier Hessian could not be factorized."""


class SimulationStepError(ToolkitError):
    """A time step failed; carries the index of the failing step."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class GridNestingError(ToolkitError, ValueError):
    """Step counts do not nest inside the reference grid."""


class DegenerateFitError(ToolkitError, ValueError):
    """A log-log regression cannot be computed from the inputs."""


class OracleNotApplicableError(ToolkitError, ValueError):
    """An exact law was requested for a model it does not cover."""


class ConfigError(ToolkitError, ValueError):
    """An experiment config could not be parsed or typed."""
