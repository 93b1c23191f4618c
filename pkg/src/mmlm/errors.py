"""Exception hierarchy.

Three failure families, each with a stable CLI exit code: bad input data (2),
inconsistent model structure (3), and numerical estimation failures (4).
"""


class MmlmError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DataError(MmlmError):
    """The input data (values, weights, files) is invalid."""

    exit_code = 2


class ModelError(MmlmError):
    """The model specification or configuration is inconsistent."""

    exit_code = 3


class NumericError(MmlmError):
    """Estimation failed numerically."""

    exit_code = 4


class InvalidWeightsError(DataError):
    """Membership weights are negative, all zero, or otherwise unusable."""


class InvalidDistanceError(DataError):
    """A distance used to derive attendance probabilities is not positive."""


class IsolatedAreaError(DataError):
    """An area in an adjacency structure has no neighbours."""


class IngestError(DataError):
    """A CSV file could not be ingested; carries file and line context."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: " if line is None else f"{path}:{line}: "
        super().__init__(f"{loc}{message}")
        self.path = path
        self.line = line


class DimensionError(ModelError):
    """Vector or matrix dimensions do not match the model specification."""


class InfeasibleCardinalityError(ModelError):
    """A simulation asks for more memberships per unit than there are clusters."""


class SingularDesignError(NumericError):
    """The fixed-effects design matrix is rank deficient."""


class NotPositiveDefiniteError(NumericError):
    """A covariance matrix factorization failed."""


class ConvergenceError(NumericError):
    """An iterative fit did not converge within its iteration budget."""


class DivergenceError(NumericError):
    """The sampler state became non-finite."""

    def __init__(self, iteration, detail=""):
        msg = f"non-finite sampler state at iteration {iteration}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.iteration = iteration
