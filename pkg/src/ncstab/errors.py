"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Matrix or vector shapes are inconsistent with the requested operation."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class IngestionError(ValueError):
    """A data file could not be parsed; the message names the offending line."""


class NotStabilizableError(RuntimeError):
    """The synthesis inequality is infeasible at the upper end of the decay-rate
    search, i.e. no gain was found under the configured solver margin."""


class NotStableError(RuntimeError):
    """The analysis inequality is infeasible at the upper end of the decay-rate
    search: the given gain fails second-moment stability for this moment
    estimate."""


class SolverUnknownError(RuntimeError):
    """The feasibility backend broke down numerically and produced neither a
    certified feasible point nor a completed search."""
