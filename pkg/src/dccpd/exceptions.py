"""Exception types raised by the dccpd package."""


class DccpdError(Exception):
    """Base class for all dccpd errors."""


class DimensionError(DccpdError, ValueError):
    """Shapes of the inputs are inconsistent with the requested operation."""


class DegenerateInputError(DccpdError, ValueError):
    """Input is degenerate for the operation (e.g. a zero matrix)."""


class RankDeficiencyError(DccpdError):
    """A matrix that must have full column rank is numerically rank deficient."""

    def __init__(self, message, numerical_rank=None):
        super().__init__(message)
        self.numerical_rank = numerical_rank


class DegeneratePencilError(DccpdError):
    """Generalized eigenvalues of the slice pencil are not pairwise distinct."""

    def __init__(self, message, retries=0):
        super().__init__(message)
        self.retries = retries


class RankMismatchError(DccpdError):
    """Null-space dimension found during detection disagrees with the rank.

    Signals either a wrong rank guess or a violated uniqueness condition.
    The singular spectrum that triggered the mismatch is attached.
    """

    def __init__(self, message, singular_values=None, triple=None):
        super().__init__(message)
        self.singular_values = singular_values
        self.triple = triple


class ConsistencyError(DccpdError):
    """Cross-dataset factor assembly is inconsistent (G_r not rank-1)."""


class ContractViolationError(DccpdError):
    """An internal invariant (e.g. ALS cost monotonicity) was violated."""
