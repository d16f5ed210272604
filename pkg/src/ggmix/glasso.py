"""
Graphical lasso: maximize  log|Omega| - tr(Omega S) - lam * ||Omega||_1
over symmetric positive-definite Omega, with the diagonal penalized.

The solver is the block coordinate descent of Friedman, Hastie & Tibshirani
(2008): it works on W, the running estimate of Omega^{-1}, and for every
column j solves the lasso

    min_b  1/2 b' W11 b - b' s12 + lam ||b||_1

by cyclic coordinate descent, then sets w12 = W11 b.  Because the diagonal is
penalized, W_jj = S_jj + lam is fixed throughout.  After the sweeps Omega is
recovered column by column from the lasso coefficients.

A sweep is accepted as converged when the mean absolute change of the
off-diagonal entries of W is below ``tol``, the subgradient optimality
residual is below ``tol``, and Omega W = I holds to ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .exceptions import ConfigurationError, ConvergenceError, SingularCovarianceError

DEFAULT_TOL = 1e-4
DEFAULT_MAX_SWEEPS = 1000
ZERO_THRESHOLD = 1e-3
# smallest/largest eigenvalue ratio below which an unpenalized inverse is refused
SINGULAR_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class GlassoSolution:
    omega: np.ndarray
    sigma: np.ndarray
    lam: float
    sweeps_used: int
    max_kkt_residual: float

    def n_edges(self, threshold: float = ZERO_THRESHOLD) -> int:
        """Number of off-diagonal pairs with |omega_ij| > threshold."""
        iu = np.triu_indices(self.omega.shape[0], k=1)
        return int(np.count_nonzero(np.abs(self.omega[iu]) > threshold))


@njit(cache=True, nogil=True)
def _lasso_column(W, S, lam, j, b, wb, inner_tol, inner_max):
    # Coordinate descent on column j's lasso; b is updated in place and
    # wb holds W11 @ b on exit (entry j is meaningless).
    p = W.shape[0]
    wb[:] = 0.0
    for k in range(p):
        bk = b[k]
        if k != j and bk != 0.0:
            for l in range(p):
                wb[l] += W[l, k] * bk
    for _ in range(inner_max):
        dmax = 0.0
        for k in range(p):
            if k == j:
                continue
            wkk = W[k, k]
            c = S[k, j] - (wb[k] - wkk * b[k])
            if c > lam:
                bn = (c - lam) / wkk
            elif c < -lam:
                bn = (c + lam) / wkk
            else:
                bn = 0.0
            d = bn - b[k]
            if d != 0.0:
                for l in range(p):
                    wb[l] += W[l, k] * d
                b[k] = bn
                ad = abs(d) * wkk
                if ad > dmax:
                    dmax = ad
        if dmax < inner_tol:
            break


@njit(cache=True, nogil=True)
def _omega_from_coefs(W, B):
    p = W.shape[0]
    Om = np.zeros((p, p))
    for j in range(p):
        acc = W[j, j]
        for k in range(p):
            if k != j:
                acc -= W[k, j] * B[j, k]
        t = 1.0 / acc
        Om[j, j] = t
        for k in range(p):
            if k != j:
                Om[k, j] = -B[j, k] * t
    for i in range(p):
        for j in range(i + 1, p):
            a = 0.5 * (Om[i, j] + Om[j, i])
            Om[i, j] = a
            Om[j, i] = a
    return Om


@njit(cache=True, nogil=True)
def _kkt_residual(W, S, Om, lam):
    p = W.shape[0]
    worst = 0.0
    for i in range(p):
        for j in range(p):
            g = W[i, j] - S[i, j]
            o = Om[i, j]
            if o == 0.0:
                r = abs(g) - lam
                if r < 0.0:
                    r = 0.0
            elif o > 0.0:
                r = abs(g - lam)
            else:
                r = abs(g + lam)
            if r > worst:
                worst = r
    return worst


@njit(cache=True, nogil=True)
def _inverse_residual(W, Om):
    p = W.shape[0]
    worst = 0.0
    for i in range(p):
        for j in range(p):
            acc = 0.0
            for k in range(p):
                acc += Om[i, k] * W[k, j]
            if i == j:
                acc -= 1.0
            if abs(acc) > worst:
                worst = abs(acc)
    return worst


@njit(cache=True, nogil=True)
def _glasso_bcd(S, lam, W, B, tol, max_sweeps, inner_tol, inner_max):
    p = S.shape[0]
    for i in range(p):
        W[i, i] = S[i, i] + lam
    wb = np.zeros(p)
    sweeps = 0
    kkt = np.inf
    if p == 1:
        Om = _omega_from_coefs(W, B)
        return Om, 0, _kkt_residual(W, S, Om, lam), True
    npairs = p * (p - 1)
    for _ in range(max_sweeps):
        dw = 0.0
        for j in range(p):
            _lasso_column(W, S, lam, j, B[j], wb, inner_tol, inner_max)
            for l in range(p):
                if l != j:
                    dw += abs(wb[l] - W[l, j])
                    W[l, j] = wb[l]
                    W[j, l] = wb[l]
        sweeps += 1
        if dw / npairs < tol:
            Om = _omega_from_coefs(W, B)
            kkt = _kkt_residual(W, S, Om, lam)
            if kkt <= tol and _inverse_residual(W, Om) <= tol:
                return Om, sweeps, kkt, True
    Om = _omega_from_coefs(W, B)
    return Om, sweeps, _kkt_residual(W, S, Om, lam), False


def _check_cov(S) -> np.ndarray:
    S = np.array(S, dtype=float, copy=True)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ConfigurationError(f"covariance must be square, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ConfigurationError("covariance has non-finite entries")
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
        raise ConfigurationError("covariance is not symmetric")
    if np.any(np.diag(S) < 0):
        raise ConfigurationError("covariance has negative diagonal entries")
    return 0.5 * (S + S.T)


def _unpenalized(S: np.ndarray) -> GlassoSolution:
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= SINGULAR_RCOND * max(ev[-1], 0.0):
        raise SingularCovarianceError(
            f"covariance is singular (eigenvalue ratio {ev[0] / ev[-1] if ev[-1] > 0 else 0:.2e}); "
            "lambda = 0 has no solution")
    c = cho_factor(S, lower=True, check_finite=False)
    omega = cho_solve(c, np.eye(S.shape[0]), check_finite=False)
    omega = 0.5 * (omega + omega.T)
    resid = float(np.max(np.abs(S @ omega - np.eye(S.shape[0]))))
    return GlassoSolution(omega, S.copy(), 0.0, 0, resid)


def glasso_fit(S, lam: float, *, tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
               warm_start: GlassoSolution | None = None) -> GlassoSolution:
    """Penalized precision estimate for empirical covariance ``S``.

    Parameters
    ----------
    S : (p, p) array
        Symmetric positive-semidefinite covariance. Must be nonsingular when
        ``lam == 0``.
    lam : float
        Penalty applied to every entry of Omega, diagonal included.
    tol : float
        Convergence threshold (mean absolute change of W per sweep, and
        maximal subgradient residual).
    max_sweeps : int
        Sweep budget; exceeding it raises :class:`ConvergenceError` whose
        ``best`` attribute holds the last iterate.
    warm_start : GlassoSolution, optional
        Previous solution (typically at a nearby ``lam`` or nearby ``S``).

    Returns
    -------
    GlassoSolution
    """
    S = _check_cov(S)
    lam = float(lam)
    if not lam >= 0.0:
        raise ConfigurationError(f"lambda must be >= 0, got {lam}")
    if tol <= 0 or max_sweeps < 1:
        raise ConfigurationError("tol must be > 0 and max_sweeps >= 1")
    if lam == 0.0:
        return _unpenalized(S)
    p = S.shape[0]
    if warm_start is not None and warm_start.omega.shape == (p, p) and warm_start.lam > 0:
        W = np.array(warm_start.sigma, dtype=float, copy=True)
        om = warm_start.omega
        B = -(om / np.diag(om)[None, :]).T.copy()
        np.fill_diagonal(B, 0.0)
    else:
        W = S.copy()
        B = np.zeros((p, p))
    inner_tol = 1e-2 * tol
    omega, sweeps, kkt, ok = _glasso_bcd(S, lam, W, B, float(tol), int(max_sweeps), inner_tol, 10000)
    sol = GlassoSolution(omega, W, lam, int(sweeps), float(kkt))
    if not ok:
        raise ConvergenceError(f"graphical lasso did not converge in {max_sweeps} sweeps "
                               f"(kkt residual {kkt:.3g})", best=sol, residual=float(kkt))
    return sol


def glasso_path(S, lambdas, *, tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> list:
    """Solutions for a strictly descending sequence of penalties, warm-started along the path."""
    lambdas = [float(v) for v in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigurationError("lambdas must be strictly descending")
    out = []
    prev = None
    for lam in lambdas:
        prev = glasso_fit(S, lam, tol=tol, max_sweeps=max_sweeps, warm_start=prev)
        out.append(prev)
    return out


def glasso_objective(omega, S, lam: float) -> float:
    """log|Omega| - tr(Omega S) - lam ||Omega||_1; -inf outside the PD cone."""
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return -np.inf
    return float(logdet - np.sum(omega * S) - lam * np.sum(np.abs(omega)))
