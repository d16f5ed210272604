"""
Pseudo-cluster tuning versus the full grid search
=================================================

The heuristic scores graphical-lasso paths on random pseudo-clusters instead
of running the EM at every grid value.  It is much cheaper and tends to pick
a somewhat larger penalty.
"""

import time

from ggmix import EmConfig, PenaltyConfig, select_bic, select_heuristic
from ggmix.simulation import SyntheticConfig, sample_problem

for n_k in (15, 50, 200):
    problem = sample_problem(SyntheticConfig(p=25, n_k=(n_k, n_k), seed=11))
    t0 = time.perf_counter()
    full = select_bic(problem.data, EmConfig(K=2, penalty=PenaltyConfig(0.1, 1)))
    t1 = time.perf_counter()
    heur = select_heuristic(problem.data, 2, repeats=10, criterion="BIC", seed=0)
    t2 = time.perf_counter()
    print(f"n_k={n_k:3d}  full: lambda={full.lambda_star:.2f} ({t1 - t0:5.2f}s)   "
          f"heuristic: lambda={heur.lambda_star:.2f} ({t2 - t1:5.2f}s)")
