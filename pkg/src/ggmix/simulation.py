"""
Synthetic two-cluster problems with overlapping sparse network structure.

Cluster 1 has a precision matrix with ``p`` randomly placed symmetric
off-diagonal pairs equal to ``edge_value``; cluster 2 is obtained by moving
half of those pairs to fresh positions.  Each pattern B_k is shifted by the
smallest multiple of the identity that gives a condition number below ``p``,
then scaled to unit diagonal.  Cluster 2 is offset by ``alpha / sqrt(p)`` in
every coordinate, so the cluster means are ``alpha`` apart.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .core import SCHEMA_VERSION, DataMatrix, write_csv_matrix
from .exceptions import ConfigurationError

DELTA_SLACK = 1e-6


@dataclass(frozen=True)
class SyntheticConfig:
    p: int = 25
    n_k: tuple = (15, 15)
    alpha: float = 3.5
    edge_value: float = 0.5
    seed: int = 0
    odd_p: str = "replicate"  # "replicate": floor(p/2) pairs move when p is odd; "reject": odd p is an error

    def __post_init__(self):
        object.__setattr__(self, "n_k", tuple(int(v) for v in self.n_k))
        if self.p < 4:
            raise ConfigurationError(f"p must be >= 4, got {self.p}")
        if len(self.n_k) != 2 or min(self.n_k) < 1:
            raise ConfigurationError(f"n_k must be two positive sizes, got {self.n_k}")
        if not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if self.odd_p not in ("replicate", "reject"):
            raise ConfigurationError(f"odd_p must be 'replicate' or 'reject', got {self.odd_p!r}")
        if self.odd_p == "reject" and self.p % 2:
            raise ConfigurationError(f"p={self.p} is odd; half the edges cannot be relocated")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        fields = ("p", "n_k", "alpha", "edge_value", "seed", "odd_p")
        unknown = set(d) - set(fields) - {"schema_version", "shared_edge_count"}
        if unknown:
            raise ConfigurationError(f"unknown synthetic config fields {sorted(unknown)}")
        return cls(**{k: d[k] for k in fields if k in d})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_k"] = list(self.n_k)
        return d


@dataclass(frozen=True, eq=False)
class SyntheticProblem:
    data: DataMatrix
    true_labels: np.ndarray
    true_precisions: tuple
    means: tuple
    shared_edge_count: int
    config: SyntheticConfig
    deltas: tuple = ()

    @property
    def n(self) -> int:
        return self.data.n


def minimal_shift(B: np.ndarray, max_cond: float) -> float:
    """Smallest delta (plus a tiny slack) with B + delta I positive-definite and cond < max_cond."""
    ev = np.linalg.eigvalsh(B)
    lo, hi = ev[0], ev[-1]
    return float(max(-lo, (hi - max_cond * lo) / (max_cond - 1.0)) + DELTA_SLACK)


def _pairs_to_matrix(p: int, pairs, value: float) -> np.ndarray:
    B = np.zeros((p, p))
    for i, j in pairs:
        B[i, j] = B[j, i] = value
    return B


def _standardize(Om: np.ndarray) -> np.ndarray:
    d = 1.0 / np.sqrt(np.diag(Om))
    out = Om * d[:, None] * d[None, :]
    np.fill_diagonal(out, 1.0)
    return 0.5 * (out + out.T)


def make_precision_pair(p: int, seed=None, *, edge_value: float = 0.5, odd_p: str = "replicate",
                        return_details: bool = False):
    """Two unit-diagonal sparse precision matrices with p edges each, about half shared.

    ``seed`` may be an int, a SeedSequence or a Generator.  With
    ``return_details`` the pre-standardization shifts and the number of shared
    pairs are also returned.
    """
    if p < 4:
        raise ConfigurationError(f"p must be >= 4, got {p}")
    if p % 2 and odd_p == "reject":
        raise ConfigurationError(f"p={p} is odd; half the edges cannot be relocated")
    n_move = p // 2
    n_slots = p * (p - 1) // 2
    if n_slots < p + n_move:
        raise ConfigurationError(f"p={p} leaves no room to relocate {n_move} edges")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    iu = np.triu_indices(p, k=1)
    slots = np.column_stack(iu)
    chosen = rng.choice(n_slots, size=p, replace=False)
    moved = rng.choice(p, size=n_move, replace=False)
    free = np.setdiff1d(np.arange(n_slots), chosen)
    new = rng.choice(free, size=n_move, replace=False)
    kept = np.delete(chosen, moved)
    support1 = slots[chosen]
    support2 = slots[np.concatenate([kept, new])]

    out, deltas = [], []
    for support in (support1, support2):
        B = _pairs_to_matrix(p, support, edge_value)
        delta = minimal_shift(B, p)
        deltas.append(delta)
        out.append(_standardize(B + delta * np.eye(p)))
    if return_details:
        return out[0], out[1], tuple(deltas), p - n_move
    return out[0], out[1]


def draw_gaussian(rng: np.random.Generator, mean: np.ndarray, precision: np.ndarray, n: int) -> np.ndarray:
    """n draws from N(mean, precision^{-1}) through the Cholesky factor of the precision."""
    L = cholesky(precision, lower=True)
    Z = rng.standard_normal((n, precision.shape[0]))
    # x = L^{-T} z has covariance (L L^T)^{-1}
    return solve_triangular(L, Z.T, lower=True, trans="T").T + mean


def cluster_means(p: int, alpha: float) -> tuple:
    return np.zeros(p), np.full(p, alpha / np.sqrt(p))


def sample_from(precisions, means, n_k, rng: np.random.Generator):
    """Draw a shuffled two-cluster sample; returns (X, labels)."""
    blocks = [draw_gaussian(rng, m, P, n) for m, P, n in zip(means, precisions, n_k)]
    labels = np.concatenate([np.full(n, k) for k, n in enumerate(n_k)])
    X = np.vstack(blocks)
    order = rng.permutation(X.shape[0])
    return X[order], labels[order]


def sample_problem(cfg: SyntheticConfig) -> SyntheticProblem:
    ss = np.random.SeedSequence(cfg.seed)
    net_seq, data_seq = ss.spawn(2)
    O1, O2, deltas, shared = make_precision_pair(cfg.p, np.random.default_rng(net_seq),
                                                 edge_value=cfg.edge_value, odd_p=cfg.odd_p,
                                                 return_details=True)
    means = cluster_means(cfg.p, cfg.alpha)
    X, labels = sample_from((O1, O2), means, cfg.n_k, np.random.default_rng(data_seq))
    return SyntheticProblem(DataMatrix(X), labels, (O1, O2), means, shared, cfg, deltas)


def matched_test_set(problem: SyntheticProblem, seed) -> tuple:
    """An independent sample with the same parameters and cluster sizes."""
    rng = np.random.default_rng(seed)
    return sample_from(problem.true_precisions, problem.means, problem.config.n_k, rng)


def check_problem(omegas, shared_expected=None) -> list:
    """Return a list of violated generator invariants (empty when all hold)."""
    problems = []
    supports = []
    for k, O in enumerate(omegas):
        p = O.shape[0]
        if not np.array_equal(O, O.T):
            problems.append(f"omega{k + 1} not symmetric")
        if not np.all(np.diag(O) == 1.0):
            problems.append(f"omega{k + 1} diagonal not exactly 1")
        iu = np.triu_indices(p, k=1)
        sup = set(zip(*[a[O[iu] != 0] for a in iu]))
        if len(sup) != p:
            problems.append(f"omega{k + 1} has {len(sup)} edges, expected {p}")
        if np.linalg.eigvalsh(O)[0] <= 0:
            problems.append(f"omega{k + 1} not positive-definite")
        supports.append(sup)
    if shared_expected is not None and len(omegas) == 2:
        shared = len(supports[0] & supports[1])
        if shared != shared_expected:
            problems.append(f"{shared} shared edges, expected {shared_expected}")
    return problems


def export_problem(problem: SyntheticProblem, directory) -> Path:
    """Write data.csv, labels.csv, omega1.csv, omega2.csv and config.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_csv_matrix(d / "data.csv", problem.data.values)
    write_csv_matrix(d / "labels.csv", problem.true_labels.reshape(-1, 1))
    write_csv_matrix(d / "omega1.csv", problem.true_precisions[0])
    write_csv_matrix(d / "omega2.csv", problem.true_precisions[1])
    meta = {"schema_version": SCHEMA_VERSION, **problem.config.to_dict(),
            "shared_edge_count": problem.shared_edge_count}
    (d / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d
