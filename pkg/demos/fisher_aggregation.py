"""
Fisher-weighted aggregation
===========================

Three clients send parameters and layer-normalized Fisher diagonals.
Coordinates that every client considers unimportant fall back to the
plain dataset-size-weighted average.
"""
import numpy as np

from qfedfisher import qsim, vqc
from qfedfisher.fedcore import ClientUpdate, aggregate_fedavg, aggregate_fedfisher

rng = np.random.default_rng(1)
layout = qsim.CircuitLayout(2, 2)
task = vqc.Task.make_binary()

updates = []
for cid, n in enumerate([40, 25, 60]):
    states = np.stack([qsim.amplitude_encode(rng.normal(size=4)).amplitudes for _ in range(n)])
    labels = rng.integers(0, 2, size=n)
    params = rng.normal(size=layout.n_params)
    fisher = vqc.fisher_diagonal(layout, params, states, labels, task)
    updates.append(ClientUpdate(cid, params, n, vqc.normalize_fisher_layerwise(fisher, layout)))

print("normalized Fisher, client 0:\n", updates[0].fisher.reshape(layout.n_layers, -1).round(3))

avg = aggregate_fedavg(updates)
theta, substituted = aggregate_fedfisher(updates, delta=0.6)
print("fedavg   :", avg.round(3))
print("fedfisher:", theta.round(3))
print("summed Fisher:", sum(u.fisher for u in updates).round(3))
print("substituted coordinates:", substituted.tolist())
assert np.array_equal(theta[substituted], avg[substituted])
