"""
Circuits, readout and gradients
===============================

Build a small layered circuit, read out Z expectations, and compare the
one-sweep adjoint gradient against parameter shifts.
"""
import numpy as np

from qfedfisher import oracles, qsim

rng = np.random.default_rng(0)

# 3 qubits, 2 layers of RY / RX rotations followed by a CNOT chain
layout = qsim.CircuitLayout(n_qubits=3, n_layers=2)
print(layout.n_params, "parameters")
print("parameter 7 is (layer, axis, qubit) =", layout.param_label(7))

# amplitude encoding normalizes any nonzero 8-vector into a 3-qubit state
state = qsim.amplitude_encode(rng.normal(size=8))
params = rng.uniform(-np.pi, np.pi, layout.n_params)
out = qsim.run_circuit(layout, params, state)
print("norm after circuit:", out.norm())
print("<Z_q>:", [round(qsim.expectation_z(out, q), 4) for q in range(3)])

# gradient of <Z_0> - 0.5 <Z_2>
weights = [1.0, 0.0, -0.5]
adj = qsim.adjoint_gradient(layout, params, state, weights)
shift = oracles.parameter_shift_gradient(3, 2, params, state.amplitudes, weights)
print("max |adjoint - parameter shift|:", np.abs(adj - shift).max())
