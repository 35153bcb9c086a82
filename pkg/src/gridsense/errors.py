"""Exception types shared across the package."""


class GridSenseError(Exception):
    """Base class for all domain errors."""


class CycleDetected(GridSenseError):
    """Active line set contains a loop; a feeder configuration must be a tree."""


class Disconnected(GridSenseError):
    """One or more buses are unreachable from the substation."""


class DuplicateEdge(GridSenseError):
    """Two active lines connect the same pair of buses."""


class UnknownLine(GridSenseError):
    """Referenced line id is not part of the topology."""


class InvalidFeeder(GridSenseError):
    """Feeder description violates a structural requirement."""


class DimensionMismatch(GridSenseError):
    """Vector or matrix sizes are inconsistent with the network."""


class EmptyWindow(GridSenseError):
    """Measurement window holds no snapshots."""


class NoFeasibleConfiguration(GridSenseError):
    """No candidate topology configuration survived validation."""


class AllMasked(GridSenseError):
    """Every entry was excluded by the error-metric mask."""


class NotConverged(GridSenseError):
    """Iterative solver hit its iteration cap.

    Carries the best iterate found so far and the residual at that point so
    callers can inspect or salvage it.
    """

    def __init__(self, message, *, iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.iterations = iterations
