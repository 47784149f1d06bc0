"""Exception types shared across the toolkit."""


class LayerflowError(Exception):
    """Base class for all toolkit errors."""


class MissingColumn(LayerflowError):
    """A required CSV header column is absent."""


class DanglingNodeReference(LayerflowError):
    """A link or demand row references a node id that does not exist."""


class NonPositiveCapacity(LayerflowError):
    """A link row carries capacity <= 0."""


class NonPositiveFreeFlowTime(LayerflowError):
    """A link row carries free-flow time <= 0."""


class NegativeDemand(LayerflowError):
    """An OD demand is negative."""


class DisconnectedOD(LayerflowError):
    """No path exists for an OD pair with positive demand."""


class NegativeCost(LayerflowError):
    """Shortest-path costs must be nonnegative and finite."""


class RowSumViolation(LayerflowError):
    """A choice-matrix row does not sum to one."""

    def __init__(self, od_index, row_sum):
        self.od_index = od_index
        self.row_sum = row_sum
        super().__init__(f"choice probabilities for OD index {od_index} sum to {row_sum!r}, expected 1")


class DimensionMismatch(LayerflowError):
    """Operand dimensions are inconsistent."""


class NoPathForOD(LayerflowError):
    """An OD pair has no path in the incidence support."""


class ZeroTotalCost(LayerflowError):
    """Relative gap is undefined when total path cost is zero."""


class NonFiniteEvaluation(LayerflowError):
    """A function handle returned NaN or infinity."""


class InnerSolverDiverged(LayerflowError):
    """An ADMM block subproblem produced non-finite iterates."""


class RankDeficiencyWarning(RuntimeWarning):
    """An ALS normal-equation system was near-singular and got regularized."""


class BadMode(LayerflowError):
    """Tensor mode index out of range."""


class BadRanks(LayerflowError):
    """Requested decomposition ranks are invalid for the tensor shape."""


class ZeroNorm(LayerflowError):
    """Fit is undefined for a zero reference tensor."""


class OutOfRange(LayerflowError):
    """A scalar argument lies outside its admissible interval."""
