"""
Penalized EM for mixtures of l1-penalized Gaussian graphical models.

The objective is the penalized mixture log-likelihood

    l_p(Theta) = sum_i log sum_k pi_k f_k(x_i) - n/2 * lam * sum_k pi_k^gamma ||Omega_k||_1

with ``gamma`` in {0, 1}.  Each M-step updates pi and mu with the standard
closed forms and each Omega_k with a graphical lasso on the responsibility
weighted scatter S_k at the scaled penalty

    lam_k = n lam pi_k^gamma / sum_i tau_ik  =  lam / pi_k  (gamma = 0)
                                             =  lam         (gamma = 1).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .core import (
    SCHEMA_VERSION,
    GaussianComponent,
    MixtureModel,
    PenaltyConfig,
    as_array,
    check_responsibilities,
    l1_norm,
    weighted_log_densities,
)
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DegenerateModelError,
    EmptyClusterError,
    FitFailedError,
    InvalidCovarianceError,
    NumericalError,
    SingularCovarianceError,
)
from .glasso import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, glasso_fit

log = logging.getLogger(__name__)


class Termination(str, enum.Enum):
    MAX_ITER = "MaxIter"
    MIN_CLUSTER_SIZE = "MinClusterSize"
    REL_TOL = "RelTolConverged"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class EmConfig:
    """Settings for :func:`fit`. Defaults follow the published experiments."""

    K: int = 2
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    max_iter: int = 100
    min_cluster_size: float = 4.0
    rel_tol: float = 1e-4
    restarts: int = 25
    seed: int = 0
    glasso_tol: float = DEFAULT_TOL
    glasso_max_sweeps: int = DEFAULT_MAX_SWEEPS

    def __post_init__(self):
        if self.K < 1 or self.max_iter < 1 or self.restarts < 1:
            raise ConfigurationError("K, max_iter and restarts must be >= 1")
        if not self.min_cluster_size >= 1:
            raise ConfigurationError("min_cluster_size must be >= 1")
        if not self.rel_tol > 0:
            raise ConfigurationError("rel_tol must be > 0")
        if self.seed < 0:
            raise ConfigurationError("seed must be nonnegative")

    @property
    def lam(self) -> float:
        return self.penalty.lam

    @property
    def gamma(self) -> int:
        return self.penalty.gamma

    def with_lambda(self, lam: float) -> "EmConfig":
        return replace(self, penalty=PenaltyConfig(float(lam), self.penalty.gamma))


@dataclass(frozen=True)
class RestartRecord:
    index: int
    termination: Termination
    pll: float
    degenerate: bool
    message: str = ""


@dataclass(frozen=True, eq=False)
class FitResult:
    model: MixtureModel
    tau: np.ndarray
    pll_trace: tuple
    termination: Termination
    degenerate: bool
    restart_index: int
    penalty: PenaltyConfig
    seed: int = 0
    q_improved: tuple = ()
    lambda_tilde: tuple = ()
    restarts: tuple = ()

    @property
    def labels(self) -> np.ndarray:
        return harden(self.tau)

    @property
    def pll(self) -> float:
        return self.pll_trace[-1]

    def to_dict(self, method: str = "mixture_em") -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": method,
            "lambda": self.penalty.lam,
            "gamma": self.penalty.gamma,
            "seed": self.seed,
            "restart_index": self.restart_index,
            "termination": self.termination.value,
            "degenerate": self.degenerate,
            "pll_trace": list(self.pll_trace),
            "lambda_tilde": list(self.lambda_tilde),
            "labels": self.labels.tolist(),
            "model": self.model.to_dict(),
        }


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

def _normalize(logw: np.ndarray):
    lse = logsumexp(logw, axis=1)
    if not np.all(np.isfinite(lse)):
        bad = int(np.flatnonzero(~np.isfinite(lse))[0])
        raise DegenerateModelError(f"observation {bad} has zero density under every component")
    tau = np.exp(logw - lse[:, None])
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, lse


def e_step(data, model: MixtureModel) -> np.ndarray:
    """Posterior cluster probabilities tau_ik, normalized in the log domain."""
    tau, _ = _normalize(weighted_log_densities(data, model))
    return tau


def m_step_pi(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return tau.sum(axis=0) / tau.shape[0]


def m_step_mu(data, tau) -> list:
    X = as_array(data)
    tau = np.asarray(tau, dtype=float)
    mass = tau.sum(axis=0)
    if np.any(mass <= 0):
        raise EmptyClusterError(f"cluster {int(np.argmin(mass))} has zero total responsibility")
    return list((tau.T @ X) / mass[:, None])


def weighted_scatter(X: np.ndarray, weights: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """sum_i w_i (x_i - mu)(x_i - mu)^T / sum_i w_i."""
    Xc = X - mu
    S = (Xc * weights[:, None]).T @ Xc / weights.sum()
    return 0.5 * (S + S.T)


def scaled_lambdas(pi, penalty: PenaltyConfig) -> np.ndarray:
    """Per-cluster glasso penalty used by the M-step: lam / pi_k (gamma=0) or lam (gamma=1)."""
    pi = np.asarray(pi, dtype=float)
    if penalty.gamma == 1:
        return np.full(pi.shape, penalty.lam)
    with np.errstate(divide="ignore"):
        return penalty.lam / pi


def _omega_solutions(X, tau, mu, pi_new, penalty, tol, max_sweeps, warm=None):
    lams = scaled_lambdas(pi_new, penalty)
    sols = []
    for k in range(tau.shape[1]):
        S_k = weighted_scatter(X, tau[:, k], mu[k])
        try:
            sols.append(glasso_fit(S_k, lams[k], tol=tol, max_sweeps=max_sweeps,
                                   warm_start=None if warm is None else warm[k]))
        except NumericalError as exc:
            exc.args = (f"cluster {k}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            exc.cluster = k
            raise
    return sols, lams


def m_step_omega(data, tau, mu, pi_new, penalty: PenaltyConfig, *,
                 tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> list:
    """Graphical lasso on each weighted scatter at the scaled penalty."""
    X = as_array(data)
    tau = check_responsibilities(tau)
    sols, _ = _omega_solutions(X, tau, mu, pi_new, penalty, tol, max_sweeps)
    return [s.omega for s in sols]


def harden(tau) -> np.ndarray:
    """argmax_k tau_ik; ties go to the smallest k."""
    return np.argmax(np.asarray(tau), axis=1)


def random_partition(n: int, K: int, min_size: float, rng: np.random.Generator,
                     max_tries: int = 10_000) -> np.ndarray:
    """Uniform labels, redrawn until every cluster has at least ``min_size`` members."""
    if n < K * min_size:
        raise ConfigurationError(f"n={n} is too small for K={K} clusters of size >= {min_size}")
    for _ in range(max_tries):
        labels = rng.integers(0, K, size=n)
        if np.min(np.bincount(labels, minlength=K)) >= min_size:
            return labels
    # near the n = K * min_size boundary rejection is hopeless; fall back to a balanced shuffle
    labels = np.arange(n) % K
    rng.shuffle(labels)
    return labels


# ---------------------------------------------------------------------------
# Full EM
# ---------------------------------------------------------------------------

def _rel_change(new: float, old: float, eps: float) -> bool:
    if abs(old) > 1e-12:
        return abs(new / old - 1.0) <= eps
    return abs(new - old) < eps * max(1.0, abs(new))


def _penalty(weights, omegas, penalty: PenaltyConfig) -> float:
    if penalty.lam == 0.0:
        return 0.0
    w = np.asarray(weights) ** penalty.gamma
    return penalty.lam * float(sum(wk * l1_norm(O) for wk, O in zip(w, omegas)))


def _q_pi(mass, pi, omegas, penalty, n) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(mass > 0, mass * np.log(pi), 0.0)
    return float(np.sum(t)) - 0.5 * n * _penalty(pi, omegas, penalty)


def em_from_partition(data, cfg: EmConfig, labels, restart_index: int = 0) -> FitResult:
    """Run one EM trajectory started from a hard partition ``labels``."""
    X = as_array(data)
    n = X.shape[0]
    K = cfg.K
    labels = np.asarray(labels)
    pen = cfg.penalty
    gtol, gmax = cfg.glasso_tol, cfg.glasso_max_sweeps

    tau = np.zeros((n, K))
    tau[np.arange(n), labels] = 1.0
    if np.any(tau.sum(axis=0) == 0):
        raise EmptyClusterError("initial partition leaves a cluster empty")
    pi = m_step_pi(tau)
    mu = m_step_mu(X, tau)
    sols, lams = _omega_solutions(X, tau, mu, pi, pen, gtol, gmax)
    model = MixtureModel.from_arrays(pi, mu, [s.omega for s in sols])

    logw = weighted_log_densities(X, model)
    tau, lse = _normalize(logw)
    trace = [float(lse.sum()) - 0.5 * n * _penalty(pi, [s.omega for s in sols], pen)]
    q_improved = []
    termination = Termination.MAX_ITER

    for _ in range(cfg.max_iter):
        mass = tau.sum(axis=0)
        if np.min(mass) < cfg.min_cluster_size:
            termination = Termination.MIN_CLUSTER_SIZE
            break
        pi_new = mass / n
        omegas_old = [s.omega for s in sols]
        q_improved.append(_q_pi(mass, pi_new, omegas_old, pen, n) >= _q_pi(mass, pi, omegas_old, pen, n))
        mu = list((tau.T @ X) / mass[:, None])
        sols, lams = _omega_solutions(X, tau, mu, pi_new, pen, gtol, gmax, warm=sols)
        pi = pi_new
        model = MixtureModel.from_arrays(pi, mu, [s.omega for s in sols])
        logw = weighted_log_densities(X, model)
        tau, lse = _normalize(logw)
        trace.append(float(lse.sum()) - 0.5 * n * _penalty(pi, [s.omega for s in sols], pen))
        if _rel_change(trace[-1], trace[-2], cfg.rel_tol):
            termination = Termination.REL_TOL
            break

    return FitResult(
        model=model,
        tau=tau,
        pll_trace=tuple(trace),
        termination=termination,
        degenerate=termination is Termination.MIN_CLUSTER_SIZE,
        restart_index=restart_index,
        penalty=pen,
        seed=cfg.seed,
        q_improved=tuple(q_improved),
        lambda_tilde=tuple(float(v) for v in lams),
    )


def restart_generators(seed: int, restarts: int) -> list:
    """Independent per-restart generators spawned from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(restarts)]


def fit(data, cfg: EmConfig) -> FitResult:
    """Best of ``cfg.restarts`` randomly initialized EM runs.

    Restarts stopping on the minimum-cluster-size rule, or failing
    numerically, are excluded from the selection.  The winner maximizes the
    penalized log-likelihood.

    Raises
    ------
    FitFailedError
        Every restart was degenerate.
    InvalidCovarianceError
        Every restart failed because an unpenalized precision estimate was
        requested from a singular covariance (only possible when lam = 0).
    """
    X = as_array(data)
    n = X.shape[0]
    if n < cfg.K * cfg.min_cluster_size:
        raise ConfigurationError(f"n={n} < K * min_cluster_size = {cfg.K * cfg.min_cluster_size}")

    best = None
    records = []
    singular = 0
    for r, rng in enumerate(restart_generators(cfg.seed, cfg.restarts)):
        labels = random_partition(n, cfg.K, cfg.min_cluster_size, rng)
        try:
            res = em_from_partition(X, cfg, labels, restart_index=r)
        except (ConvergenceError, DegenerateModelError, EmptyClusterError, NumericalError) as exc:
            singular += isinstance(exc, SingularCovarianceError)
            records.append(RestartRecord(r, Termination.NUMERICAL_FAILURE, -math.inf, True, str(exc)))
            log.debug("restart %d failed: %s", r, exc)
            continue
        records.append(RestartRecord(r, res.termination, res.pll, res.degenerate))
        if not res.degenerate and (best is None or res.pll > best.pll):
            best = res

    if best is None:
        terms = [(rec.index, rec.termination.value) for rec in records]
        if singular == len(records):
            raise InvalidCovarianceError(
                "invalid covariance estimate: singular cluster covariance in every restart")
        raise FitFailedError(f"all {len(records)} restarts were degenerate", terminations=terms)
    return replace(best, restarts=tuple(records))
