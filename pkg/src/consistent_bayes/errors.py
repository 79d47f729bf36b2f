"""Exception types raised across the package."""


class ConsistentBayesError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ConsistentBayesError, ValueError):
    """Invalid argument: wrong shape, out-of-range value, bad option."""


class UnsupportedError(ConsistentBayesError, NotImplementedError):
    """The requested operation is not available for this configuration."""


class DegenerateDataError(InputError):
    """Samples with zero spread in at least one dimension."""


class DomainError(ConsistentBayesError, ValueError):
    """A forward model was evaluated outside the region where it is defined."""


class FactorizationError(ConsistentBayesError, ValueError):
    """A covariance matrix is not symmetric positive definite."""


class EmptyPosteriorError(ConsistentBayesError):
    """Every ratio or likelihood in the batch is zero, nothing can be accepted."""


class DominanceError(ConsistentBayesError):
    """The observed density puts mass where the push-forward density vanishes."""


class InsufficientCoverageError(ConsistentBayesError):
    """Too few samples fall inside the requested event."""


class ModelEvaluationError(ConsistentBayesError):
    """One or more rows of a batch failed to evaluate.

    Attributes
    ----------
    failures : list of (int, Exception)
        Row index and the exception raised for that row, in row order.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        rows = ", ".join(str(i) for i, _ in self.failures[:10])
        more = "" if len(self.failures) <= 10 else f" (+{len(self.failures) - 10} more)"
        first = self.failures[0][1] if self.failures else None
        super().__init__(f"model evaluation failed for rows {rows}{more}: {first}")
