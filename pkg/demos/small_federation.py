"""
A small federated run
=====================

Train a 4-qubit classifier on two synthetic Gaussian blobs split across
10 skewed clients, with each aggregation strategy, from the same start.
The same thing is available as ``qfedfisher run --preset binary-small``.
"""
import numpy as np

from qfedfisher.fedcore import dirichlet_partition
from qfedfisher.runner import parse_config, run_experiment

config = parse_config(preset="binary-small", overrides={"rounds": 10, "out_dir": "demo-runs"})
print({k: getattr(config, k) for k in ("n_qubits", "n_layers", "n_clients", "dirichlet_alpha", "rounds")})

# how skewed is alpha = 0.1?  class counts per client for a toy label set
labels = np.repeat([0, 1], 1000)
parts = dirichlet_partition(labels, 10, 0.1, 100, seed=0)
print("class counts per client:", [np.bincount(labels[p], minlength=2).tolist() for p in parts])

results = run_experiment(config, write=False)
for name, res in results.items():
    curve = [round(r.test_accuracy, 3) for r in res.reports]
    print(f"{name:9s}", curve)
