"""Exception hierarchy shared by all modules."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InconsistencyError(ValueError):
    """Measured quantities violate a physical identity beyond tolerance."""


class DegenerateRegionError(ArithmeticError):
    """A normalizing integral vanishes (empty or measure-zero region)."""


class ConvergenceError(RuntimeError):
    """Two independent integration routes disagree."""


class InfeasibleLPError(RuntimeError):
    """A decoy-state linear program has an empty feasible set."""


class PipelineError(RuntimeError):
    """Wraps a failure inside the key-rate pipeline, naming the stage."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
