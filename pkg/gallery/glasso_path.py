"""
Sparsity along a graphical-lasso path
=====================================

A sparse 12-variable network, a few samples, and the number of recovered
edges as the penalty shrinks.
"""

import numpy as np

from ggmix.glasso import glasso_path
from ggmix.metrics import edge_confusion, mcc
from ggmix.simulation import draw_gaussian, make_precision_pair

rng = np.random.default_rng(0)
omega, _ = make_precision_pair(12, rng)
X = draw_gaussian(rng, np.zeros(12), omega, 60)
S = np.cov(X.T, bias=True)

lambdas = np.linspace(0.6, 0.02, 15)
for lam, sol in zip(lambdas, glasso_path(S, lambdas)):
    c = edge_confusion([sol.omega], [omega])
    print(f"lambda={lam:.3f}  edges={sol.n_edges():3d}  tpr={c.tpr:.2f}  fpr={c.fpr:.2f}  mcc={mcc(c):+.2f}")
