"""
Selection of the penalty strength over a grid.

Full schemes refit the clustering model at every grid value and score it by
BIC, held-out log-likelihood (single train/test split) or M-fold
cross-validation.  The pseudo-cluster heuristic replaces the fits by random
partitions plus one graphical-lasso path per partition, which is far cheaper
and biased towards larger penalties.  :func:`analytic_lambda` gives the
closed-form per-cluster penalty used by the analytic hard-assignment regime.

Ties between grid values are always resolved towards the larger penalty.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import em
from .core import SCHEMA_VERSION, MixtureModel, as_array, mixture_log_likelihood
from .exceptions import ConfigurationError, FitFailedError, GGMixError, InsufficientSampleError
from .glasso import ZERO_THRESHOLD, glasso_path

log = logging.getLogger(__name__)


class Criterion(str, enum.Enum):
    BIC = "BIC"
    TRAIN_TEST = "TrainTest"
    CV = "CV"
    HEURISTIC_BIC = "HeuristicBIC"
    HEURISTIC_TT = "HeuristicTT"


@dataclass(frozen=True)
class LambdaGrid:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError("lambda grid is empty")
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ConfigurationError("lambda grid values must be finite and >= 0")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError("lambda grid must be strictly ascending")
        object.__setattr__(self, "values", vals)

    @classmethod
    def default(cls) -> "LambdaGrid":
        """0.05, 0.10, ..., 1.50."""
        return cls(tuple(round(0.05 * i, 10) for i in range(1, 31)))

    @classmethod
    def from_range(cls, start: float, stop: float, step: float) -> "LambdaGrid":
        n = int(round((stop - start) / step)) + 1
        return cls(tuple(round(start + i * step, 10) for i in range(n)))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def snap(self, value: float) -> float:
        """Nearest grid value; equidistant ties go to the larger value."""
        arr = np.asarray(self.values)
        d = np.abs(arr - value)
        return float(arr[np.flatnonzero(d <= d.min() + 1e-12)[-1]])


@dataclass(frozen=True, eq=False)
class TuningResult:
    lambda_star: float
    scores: tuple
    criterion: Criterion
    best_fit: object = None
    failures: dict = field(default_factory=dict)
    per_repeat: tuple = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "criterion": self.criterion.value,
            "lambda_star": self.lambda_star,
            "scores": [{"lambda": lam, "score": (None if not math.isfinite(s) else s)}
                       for lam, s in self.scores],
            "failures": {str(k): v for k, v in self.failures.items()},
            "per_repeat": list(self.per_repeat),
        }


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def degrees_of_freedom(precisions, threshold: float = ZERO_THRESHOLD) -> int:
    """K(p+1) - 1 plus the number of nonzero upper-triangle entries (diagonal included)."""
    K = len(precisions)
    p = np.asarray(precisions[0]).shape[0]
    iu = np.triu_indices(p)
    nnz = sum(int(np.count_nonzero(np.abs(np.asarray(O)[iu]) > threshold)) for O in precisions)
    return K * (p + 1) - 1 + nnz


def bic_from_model(data, model: MixtureModel, threshold: float = ZERO_THRESHOLD) -> float:
    n = as_array(data).shape[0]
    return -2.0 * mixture_log_likelihood(data, model) + degrees_of_freedom(model.precisions, threshold) * math.log(n)


def bic_score(data, fitted, lam: float | None = None, threshold: float = ZERO_THRESHOLD) -> float:
    """BIC of a fitted model: -2 * unpenalized log-likelihood + df * log(n).

    ``fitted`` is anything with a ``model`` attribute (FitResult,
    HardClusterState) or a MixtureModel.  ``lam`` is accepted for symmetry
    with the published definition; the score depends on it only through the fit.
    """
    model = fitted if isinstance(fitted, MixtureModel) else fitted.model
    return bic_from_model(data, model, threshold)


def _argbest(lams, scores, maximize: bool) -> int:
    s = np.asarray(scores, dtype=float)
    ok = np.isfinite(s)
    if not ok.any():
        raise FitFailedError("no grid value produced a valid fit")
    target = np.max(s[ok]) if maximize else np.min(s[ok])
    idx = np.flatnonzero(ok & (s == target))
    return int(idx[np.argmax(np.asarray(lams)[idx])])


def _grid_search(grid, fit_one, score_one, maximize, criterion) -> TuningResult:
    grid = grid or LambdaGrid.default()
    lams = list(grid.values)
    scores, fits, failures = [], [], {}
    for lam in lams:
        try:
            res = fit_one(lam)
            s = float(score_one(res, lam))
        except GGMixError as exc:
            log.debug("lambda=%g failed: %s", lam, exc)
            failures[lam] = f"{type(exc).__name__}: {exc}"
            res, s = None, math.nan
        scores.append(s)
        fits.append(res)
    if all(f is None for f in fits):
        raise FitFailedError(f"every grid value failed ({len(lams)} values)",
                             terminations=list(failures.items()))
    i = _argbest(lams, scores, maximize)
    return TuningResult(lams[i], tuple(zip(lams, scores)), criterion, fits[i], failures)


# ---------------------------------------------------------------------------
# Full schemes
# ---------------------------------------------------------------------------

def select_bic(data, cfg: em.EmConfig, grid: LambdaGrid | None = None, *, fitter=em.fit) -> TuningResult:
    """Refit at every grid value and return the BIC minimizer.

    ``fitter(data, cfg)`` must return an object with a ``model`` attribute;
    it defaults to the penalized mixture EM.
    """
    X = as_array(data)
    return _grid_search(grid, lambda lam: fitter(X, cfg.with_lambda(lam)),
                        lambda res, lam: bic_score(X, res, lam), False, Criterion.BIC)


def select_train_test(train, test, cfg: em.EmConfig, grid: LambdaGrid | None = None, *,
                      fitter=em.fit) -> TuningResult:
    """Fit on ``train`` and maximize the mixture log-likelihood of ``test``."""
    Xtr, Xte = as_array(train), as_array(test)
    if Xtr.shape[1] != Xte.shape[1]:
        raise ConfigurationError(f"train has p={Xtr.shape[1]}, test has p={Xte.shape[1]}")
    return _grid_search(grid, lambda lam: fitter(Xtr, cfg.with_lambda(lam)),
                        lambda res, lam: mixture_log_likelihood(Xte, res.model), True,
                        Criterion.TRAIN_TEST)


def cv_folds(n: int, M: int, seed) -> list:
    """Seeded balanced partition of range(n) into M folds."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, M)]


def select_cv(data, cfg: em.EmConfig, grid: LambdaGrid | None = None, M: int = 5, *,
              seed=None, fitter=em.fit) -> TuningResult:
    """M-fold cross-validated held-out log-likelihood, maximized over the grid.

    Folds are drawn from ``seed`` (defaults to ``cfg.seed``).  The returned
    ``best_fit`` is a refit on all data at the selected value.
    """
    X = as_array(data)
    n = X.shape[0]
    if M < 2 or M > n:
        raise ConfigurationError(f"fold count must be in [2, n], got {M}")
    folds = cv_folds(n, M, cfg.seed if seed is None else seed)
    need = cfg.K * cfg.min_cluster_size
    if n - max(len(f) for f in folds) < need:
        raise ConfigurationError(f"training complement smaller than K * min_cluster_size = {need}")

    def fit_one(lam):
        c = cfg.with_lambda(lam)
        total = 0.0
        for f in folds:
            mask = np.ones(n, dtype=bool)
            mask[f] = False
            total += mixture_log_likelihood(X[f], fitter(X[mask], c).model)
        return total

    res = _grid_search(grid, fit_one, lambda total, lam: total, True, Criterion.CV)
    best = fitter(X, cfg.with_lambda(res.lambda_star))
    return TuningResult(res.lambda_star, res.scores, Criterion.CV, best, res.failures)


# ---------------------------------------------------------------------------
# Pseudo-cluster heuristic
# ---------------------------------------------------------------------------

def _pseudo_partition(n: int, K: int, min_size: int, rng) -> np.ndarray:
    while True:
        labels = rng.integers(0, K, size=n)
        if np.min(np.bincount(labels, minlength=K)) >= min_size:
            return labels


def _cov(X):
    mu = X.mean(axis=0)
    Xc = X - mu
    S = Xc.T @ Xc / X.shape[0]
    return mu, 0.5 * (S + S.T)


def _path_precisions(S, lam_desc, scale, tol):
    sols = glasso_path(S, [lam * scale for lam in lam_desc], tol=tol)
    return [s.omega for s in sols]


def select_heuristic(data, K: int, grid: LambdaGrid | None = None, repeats: int = 10,
                     criterion: str | Criterion = "BIC", *, gamma: int = 1, seed=0,
                     tol: float = 1e-4) -> TuningResult:
    """Approximate tuning on random pseudo-clusters.

    Each repeat draws a random partition into K pseudo-clusters (sizes >= 2),
    estimates proportions and means from it, computes one graphical-lasso
    path per pseudo-cluster, and picks the best grid value by BIC or by a
    50/50 train/test split inside every pseudo-cluster.  The per-repeat
    optima are averaged and snapped back to the grid.
    """
    crit = Criterion(criterion) if not isinstance(criterion, Criterion) else criterion
    if crit in (Criterion.BIC, Criterion.HEURISTIC_BIC):
        crit = Criterion.HEURISTIC_BIC
    elif crit in (Criterion.TRAIN_TEST, Criterion.HEURISTIC_TT):
        crit = Criterion.HEURISTIC_TT
    else:
        raise ConfigurationError(f"heuristic supports BIC or TrainTest, got {criterion}")
    X = as_array(data)
    n, p = X.shape
    if n < 2 * K:
        raise ConfigurationError(f"need n >= 2K observations, got n={n}, K={K}")
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    grid = grid or LambdaGrid.default()
    lams = np.asarray(grid.values)
    desc = lams[::-1]
    rng = np.random.default_rng(seed)
    log_n = math.log(n)
    totals = np.zeros(len(lams))
    optima = []

    for _ in range(repeats):
        labels = _pseudo_partition(n, K, 2, rng)
        idx = [np.flatnonzero(labels == k) for k in range(K)]
        pi = np.array([len(i) for i in idx]) / n
        scales = [1.0 if gamma == 1 else 1.0 / pk for pk in pi]
        scores = np.empty(len(lams))
        if crit is Criterion.HEURISTIC_BIC:
            moments = [_cov(X[i]) for i in idx]
            paths = [_path_precisions(S, desc, sc, tol) for (_, S), sc in zip(moments, scales)]
            for j in range(len(desc)):
                model = MixtureModel.from_arrays(pi, [m for m, _ in moments], [P[j] for P in paths])
                scores[len(lams) - 1 - j] = bic_from_model(X, model)
            best = _argbest(lams, scores, maximize=False)
        else:
            halves = []
            for i in idx:
                i = rng.permutation(i)
                h = (len(i) + 1) // 2
                halves.append((i[:h], i[h:]))
            moments = [_cov(X[tr]) for tr, _ in halves]
            paths = [_path_precisions(S, desc, sc, tol) for (_, S), sc in zip(moments, scales)]
            for j in range(len(desc)):
                total = 0.0
                for k, (_, te) in enumerate(halves):
                    comp = MixtureModel.from_arrays([1.0], [moments[k][0]], [paths[k][j]]).components[0]
                    total += float(np.sum(comp.log_density(X[te]))) + len(te) * math.log(pi[k])
                scores[len(lams) - 1 - j] = total
            best = _argbest(lams, scores, maximize=True)
        totals += scores
        optima.append(float(lams[best]))

    lam_star = grid.snap(float(np.mean(optima)))
    mean_scores = totals / repeats
    return TuningResult(lam_star, tuple(zip(grid.values, mean_scores.tolist())), crit,
                        per_repeat=tuple(optima))


# ---------------------------------------------------------------------------
# Analytic rule
# ---------------------------------------------------------------------------

def analytic_lambda(S, n_k: float, alpha: float = 0.05) -> float:
    """Closed-form penalty from the largest pairwise product of sample standard deviations.

    lam = t * max_{i<j} sqrt(s_ii s_jj) / sqrt(n_k - 2 + t^2), with t the upper
    alpha / (2 p^2) quantile of Student's t on n_k - 2 degrees of freedom.
    """
    S = np.asarray(S, dtype=float)
    if n_k <= 2:
        raise InsufficientSampleError(f"analytic penalty needs more than 2 observations, got {n_k}")
    if not 0 < alpha < 1:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    p = S.shape[0]
    sd = np.sqrt(np.clip(np.diag(S), 0.0, None))
    if p == 1:
        scale = float(sd[0] ** 2)
    else:
        top = np.sort(sd)[-2:]
        scale = float(top[0] * top[1])
    df = n_k - 2.0
    t = float(stats.t.isf(alpha / (2.0 * p * p), df))
    return t * scale / math.sqrt(df + t * t)
