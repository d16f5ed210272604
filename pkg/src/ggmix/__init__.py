"""
ggmix: model-based clustering with mixtures of l1-penalized Gaussian graphical models.

The main entry points are :func:`ggmix.em.fit` (penalized EM at a fixed
penalty), the selection schemes in :mod:`ggmix.tuning`, the comparison
methods in :mod:`ggmix.baselines`, the synthetic generator in
:mod:`ggmix.simulation` and the experiment grid in :mod:`ggmix.harness`.
"""

from .core import (
    DataMatrix,
    GaussianComponent,
    MixtureModel,
    PenaltyConfig,
    mixture_log_likelihood,
    penalized_log_likelihood,
)
from .em import EmConfig, FitResult, Termination, fit
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DataFormatError,
    DegenerateModelError,
    FitFailedError,
    GGMixError,
    InvalidCovarianceError,
    SingularCovarianceError,
)
from .glasso import GlassoSolution, glasso_fit, glasso_path
from .tuning import LambdaGrid, select_bic, select_cv, select_heuristic, select_train_test

__version__ = "0.1.0"
