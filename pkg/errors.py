# errors.py: exception hierarchy shared by every atwflow module


class AtwFlowError(Exception):
    """Base class for everything the library raises on purpose."""


class AnisotropyError(AtwFlowError, ValueError):
    pass


class ProjectionError(AnisotropyError):
    """Iterative projection onto a dual unit ball did not converge."""


class GridError(AtwFlowError, ValueError):
    pass


class FrameViolation(GridError):
    """A set reaches into the two outermost cell layers of the domain."""


class DistanceError(AtwFlowError):
    pass


class SolverNotCertified(AtwFlowError):
    """The primal-dual solver stopped above its gap tolerance.

    `result` holds the best iterate; `trace` the partial flow when raised
    from run_flow.
    """

    def __init__(self, message, result=None, trace=None):
        super().__init__(message)
        self.result = result
        self.trace = trace


class FlowError(AtwFlowError):
    pass


class OracleError(AtwFlowError, ValueError):
    pass


class ScenarioError(AtwFlowError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
