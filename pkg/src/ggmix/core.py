"""
Shared domain types, Gaussian densities and mixture likelihoods.

Everything downstream works in the precision parameterization: a component
stores its mean and precision matrix together with a cached Cholesky factor
of the precision, so densities are evaluated as

    log N(x | mu, Omega^{-1}) = -p/2 log(2 pi) + 1/2 log|Omega|
                                - 1/2 ||L^T (x - mu)||^2,      Omega = L L^T

and a covariance matrix is only formed when :meth:`GaussianComponent.covariance`
is called explicitly.

Labels are 0-based throughout the package.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cholesky
from scipy.special import logsumexp

from .exceptions import ConfigurationError, DataFormatError, NumericalError

LOG_2PI = math.log(2.0 * math.pi)
SCHEMA_VERSION = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataMatrix:
    """n observations (rows) by p variables (columns), all finite."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ConfigurationError(f"data must be a non-empty 2-d array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("data contains non-finite entries")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_csv(cls, path) -> "DataMatrix":
        return cls(read_csv_matrix(path))

    @classmethod
    def from_json(cls, path) -> "DataMatrix":
        with open(path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataFormatError(str(exc), line=exc.lineno) from exc
        try:
            values = np.asarray(obj["values"], dtype=float)
            n, p = int(obj["n"]), int(obj["p"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed data container: {exc}") from exc
        if values.shape != (n, p):
            raise DataFormatError(f"declared shape ({n}, {p}) does not match values {values.shape}")
        return cls(values)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"schema_version": SCHEMA_VERSION, "n": self.n, "p": self.p,
                       "values": self.values.tolist()}, fh)


def as_array(data) -> np.ndarray:
    """Return the (n, p) float array behind ``data`` (DataMatrix or array-like)."""
    if isinstance(data, DataMatrix):
        return data.values
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def read_csv_matrix(path) -> np.ndarray:
    """Read a headerless numeric CSV; errors report the 1-based line number."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                row = [float(f) for f in rec]
            except ValueError as exc:
                raise DataFormatError(f"non-numeric field ({exc})", line=lineno) from None
            if not all(math.isfinite(v) for v in row):
                raise DataFormatError("non-finite value", line=lineno)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(f"expected {width} fields, found {len(row)}", line=lineno)
            rows.append(row)
    if not rows:
        raise DataFormatError("no data rows")
    return np.array(rows, dtype=float)


def write_csv_matrix(path, a) -> None:
    a = np.atleast_2d(np.asarray(a))
    fmt = "%d" if np.issubdtype(a.dtype, np.integer) else "%.17g"
    np.savetxt(path, a, delimiter=",", fmt=fmt)


# ---------------------------------------------------------------------------
# Model types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PenaltyConfig:
    """l1 penalty strength ``lam`` and penalty form ``gamma`` (0: plain, 1: weighted by pi_k)."""

    lam: float = 0.0
    gamma: int = 1

    def __post_init__(self):
        if not (self.lam >= 0.0) or not math.isfinite(self.lam):
            raise ConfigurationError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.gamma not in (0, 1):
            raise ConfigurationError(f"gamma must be 0 or 1, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """A Gaussian in precision form.

    The Cholesky factor and log-determinant of ``precision`` are computed once
    at construction; arrays are made read-only so the cache cannot go stale.
    """

    mean: np.ndarray
    precision: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)
    log_det_precision: float = field(init=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, copy=True).reshape(-1)
        prec = np.array(self.precision, dtype=float, copy=True)
        p = mean.shape[0]
        if prec.shape != (p, p):
            raise ConfigurationError(f"precision shape {prec.shape} does not match mean length {p}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(prec))):
            raise NumericalError("component parameters are not finite")
        if np.max(np.abs(prec - prec.T), initial=0.0) > 1e-10:
            raise NumericalError("precision matrix is not symmetric")
        try:
            L = cholesky(prec, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise NumericalError("precision matrix is not positive-definite") from exc
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "precision", _frozen(prec))
        object.__setattr__(self, "chol", _frozen(L))
        object.__setattr__(self, "log_det_precision", 2.0 * float(np.sum(np.log(np.diag(L)))))

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    def covariance(self) -> np.ndarray:
        """Materialize the covariance matrix (explicit request only)."""
        Linv = np.linalg.inv(self.chol)
        return Linv.T @ Linv

    def log_density(self, X) -> np.ndarray:
        """Log-density at each row of ``X`` (shape (n, p)) -> shape (n,)."""
        Y = (X - self.mean) @ self.chol
        return -0.5 * self.p * LOG_2PI + 0.5 * self.log_det_precision - 0.5 * np.einsum("ij,ij->i", Y, Y)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "precision": self.precision.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianComponent":
        return cls(np.asarray(d["mean"]), np.asarray(d["precision"]))


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """K Gaussian components with mixing proportions ``weights``."""

    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if len(comps) < 1:
            raise ConfigurationError("a mixture needs at least one component")
        if w.shape[0] != len(comps):
            raise ConfigurationError(f"{len(comps)} components but {w.shape[0]} weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ConfigurationError(f"weights must be nonnegative and sum to one, got {w}")
        dims = {c.p for c in comps}
        if len(dims) != 1:
            raise ConfigurationError(f"components have differing dimensions {sorted(dims)}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def p(self) -> int:
        return self.components[0].p

    @property
    def precisions(self) -> list:
        return [c.precision for c in self.components]

    @property
    def means(self) -> list:
        return [c.mean for c in self.components]

    @classmethod
    def from_arrays(cls, weights, means: Sequence, precisions: Sequence) -> "MixtureModel":
        return cls(tuple(GaussianComponent(m, P) for m, P in zip(means, precisions)), weights)

    def to_dict(self) -> dict:
        return {"K": self.K, "p": self.p, "weights": self.weights.tolist(),
                "components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d) -> "MixtureModel":
        return cls(tuple(GaussianComponent.from_dict(c) for c in d["components"]), d["weights"])


def check_responsibilities(tau, atol: float = 1e-10) -> np.ndarray:
    """Validate an (n, K) responsibility matrix and return it as an array."""
    tau = np.asarray(tau, dtype=float)
    if tau.ndim != 2:
        raise ConfigurationError("responsibilities must be a 2-d array")
    if np.any(tau < 0) or np.any(tau > 1) or np.max(np.abs(tau.sum(axis=1) - 1.0)) > atol:
        raise ConfigurationError("responsibility rows must lie in [0, 1] and sum to one")
    return tau


# ---------------------------------------------------------------------------
# Densities and likelihoods
# ---------------------------------------------------------------------------

def l1_norm(M) -> float:
    """Elementwise l1 norm over all entries, diagonal included."""
    return float(np.sum(np.abs(M)))


def log_density(x, comp: GaussianComponent):
    """Gaussian log-density of ``x`` under ``comp``.

    ``x`` may be a single vector (returns a float) or an (n, p) array
    (returns an (n,) array).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != comp.p:
        raise ConfigurationError(f"observation dimension {X.shape[1]} != component dimension {comp.p}")
    out = comp.log_density(X)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite log-density; component is numerically invalid")
    return float(out[0]) if single else out


def component_log_densities(data, model: MixtureModel) -> np.ndarray:
    """(n, K) matrix of log f_k(x_i)."""
    X = as_array(data)
    if X.shape[1] != model.p:
        raise ConfigurationError(f"data has p={X.shape[1]} but model has p={model.p}")
    return np.column_stack([c.log_density(X) for c in model.components])


def weighted_log_densities(data, model: MixtureModel) -> np.ndarray:
    """(n, K) matrix of log pi_k + log f_k(x_i)."""
    with np.errstate(divide="ignore"):
        return component_log_densities(data, model) + np.log(model.weights)


def mixture_log_likelihood(data, model: MixtureModel) -> float:
    """Sum over observations of log sum_k pi_k f_k(x_i), log-sum-exp stabilized."""
    return float(np.sum(logsumexp(weighted_log_densities(data, model), axis=1)))


def penalty_term(model: MixtureModel, penalty: PenaltyConfig) -> float:
    """lambda * sum_k pi_k^gamma ||Omega_k||_1 (without the n/2 factor)."""
    if penalty.lam == 0.0:
        return 0.0
    w = model.weights ** penalty.gamma
    return penalty.lam * float(sum(wk * l1_norm(c.precision) for wk, c in zip(w, model.components)))


def penalized_log_likelihood(data, model: MixtureModel, penalty: PenaltyConfig) -> float:
    n = as_array(data).shape[0]
    return mixture_log_likelihood(data, model) - 0.5 * n * penalty_term(model, penalty)
