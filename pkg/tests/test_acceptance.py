"""
Acceptance suite.  Every criterion runs at its stated tolerance and writes one
PASS/FAIL line to the terminal summary.

The simulation criteria share one session fixture that runs the required
(regime, p, n_k) cells of the experiment grid with 20 datasets per cell.
Dataset seeds depend only on the master seed and the cell coordinates, so
the separate runs below see the same datasets wherever they overlap.
"""

import math
import time
from collections import defaultdict

import numpy as np
import pytest

from ggmix import em, harness, tuning
from ggmix.core import PenaltyConfig
from ggmix.glasso import glasso_fit
from ggmix.metrics import ConfusionCounts, edge_confusion, l1_error, mcc, rand_index
from ggmix.simulation import SyntheticConfig, check_problem, make_precision_pair, sample_problem

from oracles import confusion_scan, l1_sum, mcc_formula, rand_pairs

pytestmark = pytest.mark.acceptance

DATASETS = 20
MASTER_SEED = 2024
P25_NK = (15, 25, 50, 100, 200)

# (name, regimes, p_list, n_k_list)
CELLS = [
    ("b1_p25", ("B1",), (25,), P25_NK),
    ("p25_ends", ("T1", "KM", "NP"), (25,), (15, 200)),
    ("np_small", ("NP",), (25, 50), (25, 50)),
    ("b1_p50", ("B1",), (50,), (15,)),
    ("b_p50_25", ("B1", "B0"), (50,), (25,)),
]


@pytest.fixture(scope="session")
def grid(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    rows, timings = [], {}
    for name, regimes, p_list, n_k_list in CELLS:
        spec = harness.ExperimentSpec(regimes=regimes, p_list=p_list, n_k_list=n_k_list,
                                      datasets_per_cell=DATASETS, master_seed=MASTER_SEED,
                                      output_dir=str(root / name), write_models=False)
        out = harness.run_experiment(spec)
        rows.extend(harness.read_rows(out["rows"]))
        for line in out["timings"].read_text().splitlines()[1:]:
            did, method, ms = line.split(",")
            timings[(did, method)] = float(ms)
    by_cell = defaultdict(list)
    for r in rows:
        by_cell[(r["method"], r["p"], r["n_k"])].append(r)
    return {"cells": by_cell, "timings": timings, "root": root}


def mean_of(grid, method, p, n_k, key):
    vals = [r[key] for r in grid["cells"][(method, p, n_k)]]
    assert len(vals) == DATASETS, f"{method} p={p} n_k={n_k}: {len(vals)} rows"
    assert all(v is not None for v in vals), f"{method} p={p} n_k={n_k}: failed rows"
    return float(np.mean(vals))


# 1 ----------------------------------------------------------------------------

def test_c01_glasso_correctness(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(50):
        p = (5, 10, 20)[i % 3]
        A = rng.normal(size=(2 * p, p))
        S = A.T @ A / (2 * p)
        lam = float(rng.uniform(0.01, 0.5))
        sol = glasso_fit(S, lam)
        G = sol.sigma - S
        on = sol.omega != 0
        res = max(np.abs(G - lam * np.sign(sol.omega))[on].max(initial=0.0),
                  np.maximum(np.abs(G) - lam, 0.0)[~on].max(initial=0.0))
        worst = max(worst, res)
    scalar = max(abs(glasso_fit(np.array([[s]]), lam).omega[0, 0] - 1 / (s + lam))
                 for s in (0.3, 1.0, 2.0, 7.5) for lam in (0.01, 0.5, 2.0))
    inv_err = 0.0
    for p in (5, 10, 20):
        A = rng.normal(size=(3 * p, p))
        S = A.T @ A / (3 * p)
        inv_err = max(inv_err, np.abs(glasso_fit(S, 0.0).omega - np.linalg.inv(S)).max())
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-4 and scalar <= 1e-12 and inv_err <= 1e-6 and elapsed < 10
    detail = f"max KKT {worst:.2e} (<=1e-4), scalar err {scalar:.1e}, inverse err {inv_err:.1e}, {elapsed:.2f}s"
    assert record(1, ok, detail), detail


# 2 ----------------------------------------------------------------------------

def test_c02_em_monotone_gamma0(record):
    t0 = time.perf_counter()
    worst = 0.0
    runs = steps = 0
    for seed in range(50):
        prob = sample_problem(SyntheticConfig(p=25, n_k=(25, 25), seed=10_000 + seed))
        cfg = em.EmConfig(K=2, penalty=PenaltyConfig(0.2, 0), seed=seed)
        for r, g in enumerate(em.restart_generators(seed, 3)):
            labels = em.random_partition(50, 2, cfg.min_cluster_size, g)
            tr = em.em_from_partition(prob.data, cfg, labels, r).pll_trace
            runs += 1
            steps += len(tr) - 1
            for a, b in zip(tr, tr[1:]):
                worst = max(worst, (a - b) / abs(a))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 300
    detail = (f"{runs} EM runs / {steps} iterations, worst relative decrease {worst:.2e} (<=1e-8), "
              f"{elapsed:.1f}s")
    assert record(2, ok, detail), detail


# 3 ----------------------------------------------------------------------------

def test_c03_scaled_lambda_mapping(record):
    rng = np.random.default_rng(3)
    ok = True
    for _ in range(200):
        pi = rng.dirichlet(np.ones(int(rng.integers(1, 5))))
        lam = float(rng.uniform(0, 2))
        ok &= bool(np.all(em.scaled_lambdas(pi, PenaltyConfig(lam, 0)) == lam / pi))
        ok &= bool(np.all(em.scaled_lambdas(pi, PenaltyConfig(lam, 1)) == lam))
    prob = sample_problem(SyntheticConfig(p=10, n_k=(30, 20), seed=3))
    for gamma in (0, 1):
        res = em.fit(prob.data, em.EmConfig(K=2, penalty=PenaltyConfig(0.1, gamma), restarts=3))
        expect = 0.1 / res.model.weights if gamma == 0 else np.full(2, 0.1)
        ok &= bool(np.all(np.asarray(res.lambda_tilde) == expect))
    ok &= em.scaled_lambdas([0.25, 0.75], PenaltyConfig(0.3, 0))[0] == 0.3 * 4
    detail = "lambda_k = lambda/pi_k (gamma=0), lambda (gamma=1): exact on 200 random cases and inside EM"
    assert record(3, ok, detail), detail


# 4 ----------------------------------------------------------------------------

def test_c04_table2_ranges(grid, record):
    b15 = mean_of(grid, "B1", 25, 15, "lambda")
    b200 = mean_of(grid, "B1", 25, 200, "lambda")
    t15 = mean_of(grid, "T1", 25, 15, "lambda")
    ok = 0.6 <= b15 <= 1.2 and 0.10 <= b200 <= 0.25 and 0.3 <= t15 <= 0.6
    detail = (f"B1(25,15)={b15:.3f} in [0.6,1.2]; B1(25,200)={b200:.3f} in [0.10,0.25]; "
              f"T1(25,15)={t15:.3f} in [0.3,0.6]")
    assert record(4, ok, detail), detail


# 5 ----------------------------------------------------------------------------

def test_c05_table2_trends(grid, record):
    means = [mean_of(grid, "B1", 25, n, "lambda") for n in P25_NK]
    p50 = mean_of(grid, "B1", 50, 15, "lambda")
    dec = all(b < a for a, b in zip(means, means[1:]))
    ok = dec and p50 > means[0]
    detail = (f"B1 p=25 by n_k {dict(zip(P25_NK, np.round(means, 3).tolist()))} strictly decreasing={dec}; "
              f"p=50,n_k=15 {p50:.3f} > {means[0]:.3f}")
    assert record(5, ok, detail), detail


# 6 ----------------------------------------------------------------------------

def test_c06_clustering_ordering(grid, record):
    b1 = mean_of(grid, "B1", 25, 200, "rand")
    t1 = mean_of(grid, "T1", 25, 200, "rand")
    km = mean_of(grid, "KM", 25, 200, "rand")
    b1_50 = mean_of(grid, "B1", 50, 25, "rand")
    b0_50 = mean_of(grid, "B0", 50, 25, "rand")
    ok = b1 >= 0.9 and t1 >= 0.9 and b1_50 - b0_50 >= 0.1 and b1 > km
    detail = (f"(a) Rand B1={b1:.3f}, T1={t1:.3f} (>=0.9); (b) p=50,n_k=25 B1-B0={b1_50:.3f}-{b0_50:.3f}"
              f"={b1_50 - b0_50:.3f} (>=0.1); (c) B1 {b1:.3f} > KM {km:.3f}")
    assert record(6, ok, detail), detail


# 7 ----------------------------------------------------------------------------

def test_c07_structure_recovery(grid, record):
    b1 = mean_of(grid, "B1", 25, 200, "mcc")
    t1 = mean_of(grid, "T1", 25, 200, "mcc")
    npm = mean_of(grid, "NP", 25, 200, "mcc")
    ok = b1 > t1 and abs(npm) <= 0.1
    detail = f"MCC at p=25,n_k=200: B1 {b1:.3f} > T1 {t1:.3f}; NP {npm:.3f} within +-0.1"
    assert record(7, ok, detail), detail


# 8 ----------------------------------------------------------------------------

def test_c08_np_invalid_covariance(grid, record):
    checked = failures = 0
    for (method, p, n_k), rows in grid["cells"].items():
        if method != "NP" or n_k > p:
            continue
        for r in rows:
            checked += 1
            failures += "invalid covariance" not in r["error"] or r["rand"] is not None
    ok = checked >= 4 * DATASETS and failures == 0
    detail = f"{checked} NP runs with n_k <= p, {failures} without the invalid-covariance error"
    assert record(8, ok, detail), detail


# 9 ----------------------------------------------------------------------------

def test_c09_generator_invariants(record):
    bad = []
    count = 0
    for p in (24, 25, 50):
        for seed in range(100):
            O1, O2, deltas, shared = make_precision_pair(p, seed, return_details=True)
            count += 1
            want_shared = p - p // 2
            errs = check_problem((O1, O2), want_shared)
            if shared != want_shared:
                errs.append("shared count")
            for O, d in zip((O1, O2), deltas):
                B = 0.5 * ((O != 0) & ~np.eye(p, dtype=bool))
                ev = np.linalg.eigvalsh(B + d * np.eye(p))
                if not (ev[0] > 0 and ev[-1] / ev[0] < p):
                    errs.append("pre-standardization condition number")
            if errs:
                bad.append((p, seed, errs))
    ok = not bad
    detail = f"{count} precision pairs at p in {{24,25,50}}, {len(bad)} violating" + (f": {bad[:3]}" if bad else "")
    assert record(9, ok, detail), detail


# 10 ---------------------------------------------------------------------------

def test_c10_heuristic(grid, record):
    spec = harness.ExperimentSpec(master_seed=MASTER_SEED)
    parts = []
    ok = True
    t_heur = t_full = 0.0
    for n_k in P25_NK:
        lam_h = []
        for idx in range(DATASETS):
            problem, _ = harness.cell_data(spec, 25, n_k, idx)
            seed = harness.derive_seed(MASTER_SEED, "heuristic", 25, n_k, idx)
            t0 = time.perf_counter()
            res = tuning.select_heuristic(problem.data, 2, spec.grid, 10, "BIC", gamma=1, seed=seed)
            t_heur += time.perf_counter() - t0
            lam_h.append(res.lambda_star)
            t_full += grid["timings"][(harness.dataset_id(25, n_k, idx), "B1")] / 1000.0
        h, f = float(np.mean(lam_h)), mean_of(grid, "B1", 25, n_k, "lambda")
        ok &= h >= f
        parts.append(f"n_k={n_k}: {h:.3f}>={f:.3f}")
    ratio = t_heur / t_full
    ok &= ratio <= 0.5
    detail = f"heuristic vs full B1 lambda {'; '.join(parts)}; wall-clock ratio {ratio:.3f} (<=0.5)"
    assert record(10, ok, detail), detail


# 11 ---------------------------------------------------------------------------

def test_c11_metric_oracles(record):
    rng = np.random.default_rng(11)
    worst = {"rand": 0.0, "confusion": 0, "mcc": 0.0, "l1": 0.0}
    for _ in range(1000):
        n = int(rng.integers(2, 25))
        a = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
        b = rng.integers(0, int(rng.integers(1, 5)), n).tolist()
        worst["rand"] = max(worst["rand"], abs(rand_index(a, b) - rand_pairs(a, b)))

        p = int(rng.integers(2, 8))
        K = int(rng.integers(1, 4))
        est = []
        for _k in range(K):
            M = rng.normal(size=(p, p)) * (rng.random((p, p)) < 0.5) * 10 ** rng.uniform(-4, 0)
            est.append(M + M.T)
        truth = []
        for _k in range(K):
            M = (rng.random((p, p)) < 0.3) * rng.normal(size=(p, p))
            truth.append(M + M.T)
        c = edge_confusion(est, truth)
        ref = confusion_scan(est, truth)
        worst["confusion"] = max(worst["confusion"], sum(abs(x - y) for x, y in zip((c.tp, c.tn, c.fp, c.fn), ref)))
        worst["mcc"] = max(worst["mcc"], abs(mcc(c) - mcc_formula(*ref)))
        counts = rng.integers(0, 30, 4)
        worst["mcc"] = max(worst["mcc"], abs(mcc(ConfusionCounts(*map(int, counts))) - mcc_formula(*map(int, counts))))
        worst["l1"] = max(worst["l1"], abs(l1_error(est, truth) - l1_sum(est, truth)))
    ok = worst["rand"] <= 1e-12 and worst["confusion"] == 0 and worst["mcc"] <= 1e-12 and worst["l1"] <= 1e-12
    detail = (f"1000 instances: max |rand| err {worst['rand']:.1e}, confusion count mismatches {worst['confusion']}, "
              f"max |mcc| err {worst['mcc']:.1e}, max |l1| err {worst['l1']:.1e}")
    assert record(11, ok, detail), detail


# 12 ---------------------------------------------------------------------------

def test_c12_determinism(tmp_path, record):
    def run(name, workers):
        spec = harness.ExperimentSpec(regimes=("T1", "B1", "Bh", "Ah", "KM", "NP"), p_list=(10,),
                                      n_k_list=(15, 30), datasets_per_cell=2, master_seed=99,
                                      grid=[0.1, 0.3, 0.6, 1.0], restarts=4, kmeans_inits=50,
                                      output_dir=str(tmp_path / name))
        return harness.run_experiment(spec, workers=workers)["rows"].read_bytes()

    a, b, c = run("a", 1), run("b", 1), run("c", 2)
    ok = a == b == c and len(a.splitlines()) == 1 + 2 * 2 * 6
    detail = f"rows.csv byte-identical across repeat and workers 1/2: {ok} ({len(a)} bytes)"
    assert record(12, ok, detail), detail
