"""Exception hierarchy shared across edgeflow modules."""


class EdgeflowError(Exception):
    """Base class for all edgeflow errors."""


class DimensionMismatch(EdgeflowError, ValueError):
    pass


# graph
class GraphError(EdgeflowError, ValueError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class NodeIndexOutOfRange(GraphError):
    pass


# constraints
class ConstraintError(EdgeflowError, ValueError):
    pass


class RankDeficient(ConstraintError):
    pass


class MissingEdgeConstraint(ConstraintError):
    pass


class OrientationMismatch(ConstraintError):
    pass


# objectives
class ObjectiveError(EdgeflowError, ValueError):
    pass


# dynamics
class LocalityError(EdgeflowError):
    pass


class MissingNeighbor(LocalityError):
    pass


class UnexpectedNeighbor(LocalityError):
    pass


# integrate
class IntegrationError(EdgeflowError, RuntimeError):
    pass


class NonFiniteDerivative(IntegrationError):
    pass


class StepUnderflow(IntegrationError):
    pass


# reference
class SolverError(EdgeflowError, RuntimeError):
    pass


class Unbounded(SolverError):
    """The problem has no unique minimizer (solution family or unbounded below)."""


class NoConvergence(SolverError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


# harness / cli
class InsufficientData(EdgeflowError, ValueError):
    pass


class ValidationFailed(EdgeflowError):
    def __init__(self, check, message=""):
        super().__init__(f"{check}: {message}" if message else check)
        self.check = check


class ParseError(EdgeflowError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class SchemaError(EdgeflowError):
    def __init__(self, message, path=""):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
