"""Exception types.

Every numerical failure carries a short machine-readable ``reason`` code so
the command line can report it in structured form.
"""


class OICAError(Exception):
    reason = "error"


class UnsupportedOrderError(OICAError, ValueError):
    reason = "unsupported_order"


class DimensionMismatchError(OICAError, ValueError):
    reason = "dimension_mismatch"


class InsufficientDataError(OICAError, ValueError):
    reason = "insufficient_data"


class InvalidDataError(OICAError, ValueError):
    reason = "invalid_data"


class ModelViolationError(OICAError, ValueError):
    reason = "model_violation"


class UndefinedMomentError(OICAError, ValueError):
    reason = "undefined_moment"


class InvalidStartError(OICAError, ValueError):
    reason = "invalid_start"


class NumericalError(OICAError, RuntimeError):
    """Base for failures that exit with code 1 on the command line."""

    reason = "numerical_failure"


class DecompositionError(NumericalError):
    reason = "decomposition_failure"

    def __init__(self, message, vectors=None, weights=None):
        super().__init__(message)
        self.vectors = vectors
        self.weights = weights


class ResidualTooLargeError(NumericalError):
    reason = "residual_too_large"


class GaussianColumnUndetectedError(NumericalError):
    reason = "gaussian_column_undetected"


class InvalidWitnessError(OICAError, ValueError):
    reason = "invalid_witness"


class DegenerateWitnessError(OICAError, ValueError):
    reason = "degenerate_witness"


class InvalidCountError(OICAError, ValueError):
    reason = "invalid_count"


class SizeLimitError(OICAError, ValueError):
    reason = "size_limit"


class RankAmbiguousWarning(UserWarning):
    pass
