"""Exception hierarchy shared by all subpackages."""


class SPPDMError(Exception):
    """Base class for every error raised by this package."""


class GraphError(SPPDMError, ValueError):
    pass


class DisconnectedGraph(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class NonFinite(SPPDMError, ValueError):
    pass


class DimensionMismatch(SPPDMError, ValueError):
    pass


class BadParameters(SPPDMError, ValueError):
    pass


class BadSizes(SPPDMError, ValueError):
    pass


class EmptyBatch(SPPDMError, ValueError):
    pass


class NotPolyhedral(SPPDMError, TypeError):
    pass


class OracleFailure(SPPDMError, RuntimeError):
    pass


class NonFiniteIterate(SPPDMError, FloatingPointError):
    """A solver produced NaN or Inf; ``iteration`` names the offending step."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class PreconditionViolated(SPPDMError, ValueError):
    pass


class InfeasibleParameters(SPPDMError, ValueError):
    """Raised when a convergence condition does not hold; ``condition`` names it."""

    def __init__(self, condition, message=None):
        self.condition = condition
        super().__init__(message or f"parameter condition {condition!r} violated")


class InnerSolverDiverged(SPPDMError, RuntimeError):
    pass


class InsufficientData(SPPDMError, ValueError):
    pass


class LocalityViolation(SPPDMError, AssertionError):
    pass


class MissingPayload(SPPDMError, AssertionError):
    pass


class DuplicatePayload(SPPDMError, AssertionError):
    pass


class ConfigError(SPPDMError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        where = f" (line {lineno})" if lineno is not None else ""
        super().__init__(f"{message}{where}")


class ValidationError(ConfigError, ValueError):
    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid value for {field!r}")


class MissingData(SPPDMError, FileNotFoundError):
    pass
