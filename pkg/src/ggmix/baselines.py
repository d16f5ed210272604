"""
Comparison methods: K-means, the non-penalized Gaussian mixture, and
network clustering with hard assignments.

Network clustering alternates between assigning every observation to the
cluster with the best penalized per-observation score and re-estimating each
cluster's mean and graphical-lasso precision from its members.  With a shared
penalty the alternation never decreases

    J = sum_k n_k / 2 * (log|Omega_k| - tr(Omega_k S_k) - lam_k ||Omega_k||_1),

the per-cluster penalized Gaussian log-likelihood in sample-size units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import em
from .core import GaussianComponent, MixtureModel, as_array, l1_norm
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    FitFailedError,
    NumericalError,
)
from .glasso import glasso_fit
from .tuning import analytic_lambda

# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    """Lloyd iterations from ``centers``.

    Returns ``(labels, centers, wcss_trace)``; the trace holds the
    within-cluster sum of squares after every centroid update.  A cluster
    that empties is reseeded at the point farthest from its current centroid.
    """
    centers = np.array(centers, dtype=float, copy=True)
    K = centers.shape[0]
    labels = None
    trace = []
    for _ in range(max_iter):
        d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d, axis=1)
        for k in range(K):
            if not np.any(new == k):
                far = int(np.argmax(d[np.arange(len(X)), new]))
                centers[k] = X[far]
                new[far] = k
                d[far] = ((X[far] - centers) ** 2).sum(axis=1)
        for k in range(K):
            centers[k] = X[new == k].mean(axis=0)
        trace.append(float(((X - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return new, centers, trace


def kmeans(data, K: int, inits: int = 1000, seed=0, max_iter: int = 300, return_wcss: bool = False):
    """Best of ``inits`` Lloyd runs started from K distinct random observations."""
    X = as_array(data)
    n = X.shape[0]
    if K < 1 or n < K:
        raise ConfigurationError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    best_labels, best_w = None, math.inf
    for _ in range(inits):
        start = X[rng.choice(n, size=K, replace=False)]
        labels, _, trace = lloyd(X, start, max_iter)
        if trace[-1] < best_w:
            best_labels, best_w = labels, trace[-1]
    return (best_labels, best_w) if return_wcss else best_labels


# ---------------------------------------------------------------------------
# Non-penalized mixture
# ---------------------------------------------------------------------------

def gmm_unpenalized(data, cfg: em.EmConfig) -> em.FitResult:
    """Full-covariance Gaussian mixture by EM (the penalized EM at lam = 0).

    Raises
    ------
    InvalidCovarianceError
        A cluster covariance is singular in every restart, which is always
        the case when the cluster sizes do not exceed the dimension.
    """
    return em.fit(data, cfg.with_lambda(0.0))


# ---------------------------------------------------------------------------
# Hard-assignment network clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Shared:
    """One penalty for every cluster."""

    lam: float


@dataclass(frozen=True)
class Analytic:
    """Per-cluster penalties from :func:`analytic_lambda`, recomputed before every estimate."""

    alpha: float = 0.05


@dataclass(frozen=True, eq=False)
class HardClusterState:
    labels: np.ndarray
    components: tuple
    objective_trace: tuple
    lambdas: tuple
    termination: em.Termination = em.Termination.MAX_ITER
    degenerate: bool = False
    restart_index: int = 0
    restarts: tuple = field(default=(), repr=False)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    @property
    def model(self) -> MixtureModel:
        """Mixture with weights equal to cluster proportions, for likelihood-based scores."""
        return MixtureModel(self.components, self.counts / self.counts.sum())

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self, method: str = "network_clustering") -> dict:
        return {
            "method": method,
            "lambdas": list(self.lambdas),
            "termination": self.termination.value,
            "degenerate": self.degenerate,
            "restart_index": self.restart_index,
            "objective_trace": list(self.objective_trace),
            "labels": self.labels.tolist(),
            "model": self.model.to_dict(),
        }


def _estimate(X, labels, K, lambda_mode, tol, max_sweeps, warm=None):
    comps, lams, sols = [], [], []
    obj = 0.0
    for k in range(K):
        Xk = X[labels == k]
        nk = Xk.shape[0]
        mu = Xk.mean(axis=0)
        Xc = Xk - mu
        S = Xc.T @ Xc / nk
        S = 0.5 * (S + S.T)
        lam = lambda_mode.lam if isinstance(lambda_mode, Shared) else analytic_lambda(S, nk, lambda_mode.alpha)
        sol = glasso_fit(S, lam, tol=tol, max_sweeps=max_sweeps,
                         warm_start=None if warm is None else warm[k])
        comp = GaussianComponent(mu, sol.omega)
        obj += 0.5 * nk * (comp.log_det_precision - float(np.sum(sol.omega * S)) - lam * l1_norm(sol.omega))
        comps.append(comp)
        lams.append(float(lam))
        sols.append(sol)
    return tuple(comps), tuple(lams), sols, obj


def fit_fixed_partition(data, labels, lam: float, K: int | None = None, *,
                        tol: float = 1e-4, max_sweeps: int = 1000) -> HardClusterState:
    """Per-cluster mean and graphical-lasso precision for a given partition."""
    X = as_array(data)
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    if np.min(np.bincount(labels, minlength=K)) < 1:
        raise ConfigurationError("every cluster must be nonempty")
    comps, lams, _, obj = _estimate(X, labels, K, Shared(lam), tol, max_sweeps)
    return HardClusterState(labels, comps, (obj,), lams, em.Termination.REL_TOL)


def _hard_run(X, K, lambda_mode, cfg, labels, index):
    gtol, gmax = cfg.glasso_tol, cfg.glasso_max_sweeps
    comps, lams, sols, obj = _estimate(X, labels, K, lambda_mode, gtol, gmax)
    trace = [obj]
    termination = em.Termination.MAX_ITER
    for _ in range(cfg.max_iter):
        score = np.column_stack([c.log_density(X) - 0.5 * lam * l1_norm(c.precision)
                                 for c, lam in zip(comps, lams)])
        new = np.argmax(score, axis=1)
        if np.min(np.bincount(new, minlength=K)) < cfg.min_cluster_size:
            termination = em.Termination.MIN_CLUSTER_SIZE
            break
        if np.array_equal(new, labels):
            termination = em.Termination.REL_TOL
            break
        labels = new
        comps, lams, sols, obj = _estimate(X, labels, K, lambda_mode, gtol, gmax, warm=sols)
        trace.append(obj)
        if em._rel_change(trace[-1], trace[-2], cfg.rel_tol):
            termination = em.Termination.REL_TOL
            break
    return HardClusterState(labels, comps, tuple(trace), lams, termination,
                            termination is em.Termination.MIN_CLUSTER_SIZE, index)


def network_clustering_hard(data, K: int, lambda_mode, cfg: em.EmConfig) -> HardClusterState:
    """Best of ``cfg.restarts`` hard-assignment runs (highest final objective).

    ``lambda_mode`` is :class:`Shared` or :class:`Analytic`.  Stopping rules
    and restart handling mirror :func:`ggmix.em.fit`; ``cfg.K`` is ignored in
    favour of ``K``.
    """
    if not isinstance(lambda_mode, (Shared, Analytic)):
        raise ConfigurationError(f"lambda_mode must be Shared or Analytic, got {lambda_mode!r}")
    X = as_array(data)
    n = X.shape[0]
    if n < K * cfg.min_cluster_size:
        raise ConfigurationError(f"n={n} < K * min_cluster_size = {K * cfg.min_cluster_size}")
    best, records = None, []
    for r, rng in enumerate(em.restart_generators(cfg.seed, cfg.restarts)):
        labels = em.random_partition(n, K, cfg.min_cluster_size, rng)
        try:
            st = _hard_run(X, K, lambda_mode, cfg, labels, r)
        except (ConvergenceError, NumericalError, ConfigurationError) as exc:
            records.append(em.RestartRecord(r, em.Termination.NUMERICAL_FAILURE, -math.inf, True, str(exc)))
            continue
        records.append(em.RestartRecord(r, st.termination, st.objective, st.degenerate))
        if not st.degenerate and (best is None or st.objective > best.objective):
            best = st
    if best is None:
        raise FitFailedError(f"all {len(records)} restarts were degenerate",
                             terminations=[(rec.index, rec.termination.value) for rec in records])
    return replace(best, restarts=tuple(records))


def hard_fitter(K: int | None = None):
    """Adapter so :mod:`ggmix.tuning` can grid-search the shared penalty of network clustering."""

    def _fit(data, cfg):
        return network_clustering_hard(data, K or cfg.K, Shared(cfg.lam), cfg)

    return _fit


def fixed_partition_fitter(labels, K: int | None = None):
    """Adapter for tuning the shared penalty on a fixed (e.g. K-means) partition."""
    labels = np.asarray(labels)

    def _fit(data, cfg):
        return fit_fixed_partition(data, labels, cfg.lam, K or cfg.K,
                                   tol=cfg.glasso_tol, max_sweeps=cfg.glasso_max_sweeps)

    return _fit

