"""Exception hierarchy shared by every ggmix module."""


class GGMixError(Exception):
    """Base class for all library errors."""


class ConfigurationError(GGMixError, ValueError):
    """Inputs or settings are inconsistent (dimension mismatch, bad fold count, ...)."""


class DataFormatError(ConfigurationError):
    """A data file could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NumericalError(GGMixError, ArithmeticError):
    """A computation produced a non-finite or otherwise invalid quantity."""


class SingularCovarianceError(NumericalError):
    """An unpenalized precision estimate was requested from a singular covariance."""


class InvalidCovarianceError(SingularCovarianceError):
    """The non-penalized mixture produced an invalid (singular) covariance estimate."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its budget.

    Carries the best iterate reached and its optimality residual so callers
    can decide whether to accept it.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DegenerateModelError(NumericalError):
    """Every component assigns zero density to some observation."""


class EmptyClusterError(GGMixError):
    """A cluster received zero total responsibility."""


class FitFailedError(GGMixError):
    """Every EM restart ended degenerate.

    ``terminations`` lists ``(restart_index, reason)`` for each restart.
    """

    def __init__(self, message, terminations=()):
        super().__init__(message)
        self.terminations = list(terminations)


class InsufficientSampleError(ConfigurationError):
    """Too few observations for the requested estimate."""


class NotSupportedError(GGMixError):
    """Request falls outside the supported range (e.g. too many clusters to match)."""
