"""
Experiment harness: the simulation grid of methods x dimensions x cluster sizes.

Every (p, n_k, dataset) cell draws its data from a seed derived from the
master seed and the cell coordinates, and every method run inside the cell
draws from a seed that additionally includes the method name.  Results are
therefore independent of scheduling, of the worker count and of which other
methods are requested.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, em, tuning
from .core import SCHEMA_VERSION, PenaltyConfig
from .exceptions import ConfigurationError, GGMixError, InvalidCovarianceError
from .metrics import ROW_FIELDS, score_estimate
from .simulation import SyntheticConfig, matched_test_set, sample_problem

log = logging.getLogger(__name__)

REGIMES = ("T0", "B0", "T1", "B1", "Th", "Bh", "Ah", "KM", "NP")
REGIME_DESCRIPTIONS = {
    "T0": "penalized mixture EM, gamma=0, train/test",
    "B0": "penalized mixture EM, gamma=0, BIC",
    "T1": "penalized mixture EM, gamma=1, train/test",
    "B1": "penalized mixture EM, gamma=1, BIC",
    "Th": "hard-assignment network clustering, shared lambda, train/test",
    "Bh": "hard-assignment network clustering, shared lambda, BIC",
    "Ah": "hard-assignment network clustering, analytic per-cluster lambda",
    "KM": "K-means followed by per-cluster graphical lasso",
    "NP": "non-penalized full-covariance Gaussian mixture EM",
}
WORKERS_ENV = "GGMIX_WORKERS"
METRIC_KEYS = ("lambda", "rand", "tpr", "fpr", "mcc", "l1_error")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentSpec:
    regimes: tuple = REGIMES
    p_list: tuple = (25, 50)
    n_k_list: tuple = (15, 25, 50, 100, 200)
    datasets_per_cell: int = 20
    master_seed: int = 0
    grid: tuning.LambdaGrid = field(default_factory=tuning.LambdaGrid.default)
    output_dir: str = "experiment"
    restarts: int = 25
    kmeans_inits: int = 1000
    km_tuning: str = "BIC"
    analytic_alpha: float = 0.05
    alpha: float = 3.5
    write_models: bool = True
    record_timing: bool = False

    def __post_init__(self):
        for name in ("regimes", "p_list", "n_k_list"):
            v = tuple(getattr(self, name))
            if not v:
                raise ConfigurationError(f"{name} must be nonempty")
            object.__setattr__(self, name, v)
        bad = [r for r in self.regimes if r not in REGIMES]
        if bad:
            raise ConfigurationError(f"unknown regimes {bad}; choose from {REGIMES}")
        if self.datasets_per_cell < 1:
            raise ConfigurationError("datasets_per_cell must be >= 1")
        if self.km_tuning not in ("BIC", "TrainTest"):
            raise ConfigurationError("km_tuning must be 'BIC' or 'TrainTest'")
        if not isinstance(self.grid, tuning.LambdaGrid):
            object.__setattr__(self, "grid", _grid_from(self.grid))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known - {"schema_version"}
        if unknown:
            raise ConfigurationError(f"unknown experiment fields {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["grid"] = list(self.grid.values)
        for k in ("regimes", "p_list", "n_k_list"):
            d[k] = list(d[k])
        return d


def _grid_from(obj) -> tuning.LambdaGrid:
    if obj is None:
        return tuning.LambdaGrid.default()
    if isinstance(obj, tuning.LambdaGrid):
        return obj
    if isinstance(obj, dict):
        return tuning.LambdaGrid.from_range(obj["start"], obj["stop"], obj["step"])
    return tuning.LambdaGrid(tuple(obj))


def dataset_id(p: int, n_k: int, index: int) -> str:
    return f"p{p}_n{n_k}_d{index:03d}"


def cell_data(spec: ExperimentSpec, p: int, n_k: int, index: int):
    """The synthetic problem and matched test sample of one grid cell."""
    seed = derive_seed(spec.master_seed, "data", p, n_k, index)
    problem = sample_problem(SyntheticConfig(p=p, n_k=(n_k, n_k), alpha=spec.alpha, seed=seed))
    test_X, _ = matched_test_set(problem, derive_seed(spec.master_seed, "test", p, n_k, index))
    return problem, test_X


def run_regime(regime: str, problem, test_X, spec: ExperimentSpec, seed: int):
    """Run one method on one problem; returns ``(metrics, details)``."""
    X = problem.data.values
    grid = spec.grid
    gamma = 0 if regime in ("T0", "B0") else 1
    cfg = em.EmConfig(K=2, penalty=PenaltyConfig(grid.values[0], gamma), restarts=spec.restarts, seed=seed)
    details = {"regime": regime}

    if regime in ("T0", "T1", "B0", "B1", "Th", "Bh"):
        fitter = baselines.hard_fitter(2) if regime in ("Th", "Bh") else em.fit
        if regime[0] == "T":
            res = tuning.select_train_test(X, test_X, cfg, grid, fitter=fitter)
        else:
            res = tuning.select_bic(X, cfg, grid, fitter=fitter)
        fit = res.best_fit
        labels, precisions, lam = fit.labels, fit.model.precisions, res.lambda_star
        details["tuning"] = res.to_dict()
        if isinstance(fit, em.FitResult):
            details["lambda_tilde"] = list(fit.lambda_tilde)
    elif regime == "Ah":
        st = baselines.network_clustering_hard(X, 2, baselines.Analytic(spec.analytic_alpha), cfg)
        labels, precisions = st.labels, st.model.precisions
        order = np.argsort(-st.counts, kind="stable")
        lam = st.lambdas[int(order[0])]
        details["lambdas"] = list(st.lambdas)
        fit = st
    elif regime == "KM":
        labels = baselines.kmeans(X, 2, spec.kmeans_inits, seed=seed)
        if spec.km_tuning == "BIC":
            res = tuning.select_bic(X, cfg, grid, fitter=baselines.fixed_partition_fitter(labels, 2))
        else:
            res = tuning.select_train_test(X, test_X, cfg, grid,
                                           fitter=baselines.fixed_partition_fitter(labels, 2))
        fit = res.best_fit
        precisions, lam = fit.model.precisions, res.lambda_star
        details["tuning"] = res.to_dict()
    elif regime == "NP":
        fit = baselines.gmm_unpenalized(X, cfg)
        labels, precisions, lam = fit.labels, fit.model.precisions, 0.0
    else:
        raise ConfigurationError(f"unknown regime {regime}")

    metrics = {"lambda": float(lam)}
    metrics.update(score_estimate(labels, precisions, problem.true_labels, problem.true_precisions))
    details["fit"] = fit.to_dict(regime)
    return metrics, details


def run_cell(spec: ExperimentSpec, p: int, n_k: int, index: int):
    """All requested regimes on one dataset; returns ``(rows, models)``."""
    problem, test_X = cell_data(spec, p, n_k, index)
    did = dataset_id(p, n_k, index)
    rows, models = [], {}
    for regime in spec.regimes:
        seed = derive_seed(spec.master_seed, "regime", p, n_k, index, regime)
        row = {k: "" for k in ROW_FIELDS}
        row.update(dataset_id=did, method=regime, p=p, n_k=n_k)
        t0 = time.perf_counter()
        try:
            metrics, details = run_regime(regime, problem, test_X, spec, seed)
            row.update(metrics)
            models[f"{did}_{regime}"] = details
        except GGMixError as exc:
            msg = str(exc)
            if isinstance(exc, InvalidCovarianceError) and "invalid covariance" not in msg:
                msg = f"invalid covariance: {msg}"
            row["error"] = f"{type(exc).__name__}: {msg}"
            log.info("%s %s failed: %s", did, regime, row["error"])
        row["wall_ms"] = round(1000.0 * (time.perf_counter() - t0), 3)
        rows.append(row)
    return rows, models


def _worker_init():
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _cell_task(args):
    spec_dict, p, n_k, index = args
    return (p, n_k, index), run_cell(ExperimentSpec.from_dict(spec_dict), p, n_k, index)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, with_timing: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) if (k != "wall_ms" or with_timing) else "" for k in ROW_FIELDS])
    return buf.getvalue()


def read_rows(path) -> list:
    """Parse a rows.csv back into dicts with numeric fields as floats (None when empty)."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = dict(rec)
            for k in ("p", "n_k"):
                row[k] = int(row[k])
            for k in METRIC_KEYS + ("wall_ms",):
                row[k] = float(row[k]) if row[k] != "" else None
            out.append(row)
    return out


def summarize(rows) -> list:
    """Per (p, n_k, method) mean and standard deviation of every metric."""
    cells = {}
    for r in rows:
        cells.setdefault((r["p"], r["n_k"], r["method"]), []).append(r)
    order = {m: i for i, m in enumerate(REGIMES)}
    out = []
    for (p, n_k, method) in sorted(cells, key=lambda c: (c[0], c[1], order.get(c[2], 99))):
        group = cells[(p, n_k, method)]
        entry = {"p": p, "n_k": n_k, "method": method, "count": len(group),
                 "errors": sum(1 for r in group if r["error"]), "mean": {}, "sd": {}}
        for k in METRIC_KEYS:
            vals = [float(r[k]) for r in group if r[k] not in ("", None)]
            if vals:
                entry["mean"][k] = float(np.mean(vals))
                entry["sd"][k] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            else:
                entry["mean"][k] = entry["sd"][k] = None
        out.append(entry)
    return out


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> dict:
    """Run the grid and write rows.csv, summary.json, timings.csv and per-run model JSONs.

    ``rows.csv`` leaves ``wall_ms`` empty unless ``spec.record_timing`` is set,
    so that repeated runs are byte-identical; timings always go to
    ``timings.csv``.  Returns the paths written and the summary.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(spec.to_dict(), p, n_k, i) for p in spec.p_list for n_k in spec.n_k_list
             for i in range(spec.datasets_per_cell)]
    results = {}
    if workers == 1:
        _worker_init()
        for t in tasks:
            key, res = _cell_task(t)
            results[key] = res
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as ex:
            for key, res in ex.map(_cell_task, tasks):
                results[key] = res

    rows, models = [], {}
    for key in sorted(results):
        r, m = results[key]
        rows.extend(r)
        models.update(m)

    (out / "rows.csv").write_text(rows_to_csv(rows, spec.record_timing))
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dataset_id", "method", "wall_ms"))
        for r in rows:
            w.writerow((r["dataset_id"], r["method"], r["wall_ms"]))
    parsed = read_rows(out / "rows.csv")
    summary = {"schema_version": SCHEMA_VERSION, "spec": spec.to_dict(),
               "regimes": {r: REGIME_DESCRIPTIONS[r] for r in spec.regimes},
               "cells": summarize(parsed)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    if spec.write_models:
        mdir = out / "models"
        mdir.mkdir(exist_ok=True)
        for name, det in models.items():
            (mdir / f"{name}.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION, **det}) + "\n")
    return {"rows": out / "rows.csv", "summary": out / "summary.json",
            "timings": out / "timings.csv", "summary_data": summary}


# ---------------------------------------------------------------------------
# Single fits on user data
# ---------------------------------------------------------------------------

FIT_DEFAULTS = {
    "K": 2,
    "gamma": 1,
    "tuning": "bic",
    "lambda": None,
    "grid": None,
    "seed": 0,
    "restarts": 25,
    "max_iter": 100,
    "min_cluster_size": 4.0,
    "rel_tol": 1e-4,
    "folds": 5,
    "test_fraction": 0.5,
    "heuristic_repeats": 10,
}
TUNING_METHODS = ("fixed", "bic", "train_test", "cv", "heuristic_bic", "heuristic_tt")


def fit_config(overrides: dict | None = None) -> dict:
    cfg = dict(FIT_DEFAULTS)
    for k, v in (overrides or {}).items():
        if k == "schema_version":
            continue
        if k not in FIT_DEFAULTS:
            raise ConfigurationError(f"unknown fit config field {k!r}")
        if v is not None:
            cfg[k] = v
    if cfg["tuning"] not in TUNING_METHODS:
        raise ConfigurationError(f"tuning must be one of {TUNING_METHODS}, got {cfg['tuning']!r}")
    if cfg["tuning"] == "fixed" and cfg["lambda"] is None:
        raise ConfigurationError("tuning 'fixed' requires 'lambda'")
    return cfg


def tune_data(X: np.ndarray, cfg: dict) -> tuning.TuningResult:
    """Select lambda on user data according to a fit config."""
    grid = _grid_from(cfg["grid"])
    em_cfg = em.EmConfig(K=int(cfg["K"]), penalty=PenaltyConfig(grid.values[0], int(cfg["gamma"])),
                         max_iter=int(cfg["max_iter"]), min_cluster_size=float(cfg["min_cluster_size"]),
                         rel_tol=float(cfg["rel_tol"]), restarts=int(cfg["restarts"]), seed=int(cfg["seed"]))
    method = cfg["tuning"]
    if method == "bic":
        return tuning.select_bic(X, em_cfg, grid)
    if method == "train_test":
        rng = np.random.default_rng(derive_seed(cfg["seed"], "split"))
        perm = rng.permutation(X.shape[0])
        n_test = int(round(cfg["test_fraction"] * X.shape[0]))
        if not 0 < n_test < X.shape[0]:
            raise ConfigurationError("test_fraction leaves an empty train or test set")
        return tuning.select_train_test(X[np.sort(perm[n_test:])], X[np.sort(perm[:n_test])], em_cfg, grid)
    if method == "cv":
        return tuning.select_cv(X, em_cfg, grid, M=int(cfg["folds"]))
    crit = "BIC" if method == "heuristic_bic" else "TrainTest"
    return tuning.select_heuristic(X, em_cfg.K, grid, int(cfg["heuristic_repeats"]), crit,
                                   gamma=em_cfg.gamma, seed=em_cfg.seed)


def fit_data(X: np.ndarray, cfg: dict) -> dict:
    """Tune (unless fixed), fit at the chosen lambda, return the fit JSON document."""
    cfg = fit_config(cfg)
    tune = None
    if cfg["tuning"] == "fixed":
        lam = float(cfg["lambda"])
    else:
        tune = tune_data(X, cfg)
        lam = tune.lambda_star
    em_cfg = em.EmConfig(K=int(cfg["K"]), penalty=PenaltyConfig(lam, int(cfg["gamma"])),
                         max_iter=int(cfg["max_iter"]), min_cluster_size=float(cfg["min_cluster_size"]),
                         rel_tol=float(cfg["rel_tol"]), restarts=int(cfg["restarts"]), seed=int(cfg["seed"]))
    result = em.fit(X, em_cfg)
    doc = result.to_dict("mixture_em")
    doc["config"] = cfg
    doc["tuning"] = tune.to_dict() if tune is not None else None
    doc["diagnostics"] = {
        "n": int(X.shape[0]), "p": int(X.shape[1]),
        "restarts": [{"index": r.index, "termination": r.termination.value,
                      "pll": (r.pll if math.isfinite(r.pll) else None), "message": r.message}
                     for r in result.restarts],
    }
    return doc
