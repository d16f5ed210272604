"""
A small slice of the simulation grid
====================================

Runs four methods on a handful of datasets and prints the per-cell summary.
The same run is available from the shell as

    ggmix experiment --regimes B1 T1 KM NP --p 25 --n-k 15 100 --datasets 3 --out grid_demo
"""

import json
import tempfile

from ggmix.harness import ExperimentSpec, run_experiment

out = tempfile.mkdtemp(prefix="ggmix_grid_")
spec = ExperimentSpec(regimes=("B1", "T1", "KM", "NP"), p_list=(25,), n_k_list=(15, 100),
                      datasets_per_cell=3, output_dir=out)
res = run_experiment(spec)
print(res["rows"].read_text())

for cell in json.loads(res["summary"].read_text())["cells"]:
    m = cell["mean"]
    if m["rand"] is None:
        print(f"p={cell['p']} n_k={cell['n_k']:3d} {cell['method']:2s}  all {cell['errors']} runs failed")
        continue
    print(f"p={cell['p']} n_k={cell['n_k']:3d} {cell['method']:2s}  lambda={m['lambda']:.2f} "
          f"rand={m['rand']:.2f} mcc={m['mcc']:.2f}")
