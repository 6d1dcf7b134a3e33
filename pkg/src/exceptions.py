"""Error hierarchy shared by the model, solver, simulator and harness."""


class AirDataError(Exception):
    """Base class for every error raised by this package."""


class ModelDomainError(AirDataError, ValueError):
    """A model function was evaluated outside its domain."""

    def __init__(self, message: str, stage: int | None = None):
        self.stage = stage
        if stage is not None:
            message = f"stage {stage}: {message}"
        super().__init__(message)


class SingularGeometryError(ModelDomainError):
    """Wind-triangle geometry is singular (zero airspeed or vertical path)."""


class SingularMatrixError(AirDataError, ArithmeticError):
    def __init__(self, det: float, which: str = "matrix"):
        self.det = det
        self.which = which
        super().__init__(f"{which} is singular (det={det:.3e})")


class InfeasiblePointError(AirDataError, ValueError):
    """A barrier term was evaluated on or outside its bounds."""


class InfeasibleInitializationError(InfeasiblePointError):
    """The zero deviation is not strictly inside the shifted bounds."""


class IllConditionedKktError(AirDataError, ArithmeticError):
    def __init__(self, stage: int, cause: Exception | None = None):
        self.stage = stage
        super().__init__(f"KKT factorization failed at stage {stage}: {cause}")


class ScenarioInfeasibleError(AirDataError):
    def __init__(self, sample: int, reason: str):
        self.sample = sample
        self.reason = reason
        super().__init__(f"scenario infeasible at sample {sample}: {reason}")


class ConfigError(AirDataError):
    """Malformed or unknown scenario configuration."""
