"""Dense state-vector simulation of the RY/RX + linear-CNOT layered circuit.

Qubit 0 is the least-significant bit of a basis-state index everywhere.
Gates follow the exp(-i*theta*P/2) convention.

The single-state functions (``apply_ry``, ``run_circuit``, ...) operate on
:class:`StateVector` values.  Training code uses the batched kernels
(``batch_forward``, ``batch_expectation_z``, ``batch_adjoint``), which act on
``(batch, 2**n)`` complex arrays and keep every per-sample reduction
row-local so results do not depend on batch composition.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

RY, RX = 0, 1
AXES = ("RY", "RX")


class SimulationError(ValueError):
    """Invalid simulator input (bad index, shape or parameter count)."""


class EncodingError(SimulationError):
    """Input vector cannot be amplitude encoded."""


class StateVector:
    """Normalized pure state of ``n_qubits`` qubits."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, atol: float = 1e-10):
        amps = np.array(amplitudes, dtype=np.complex128).reshape(-1)
        n = _n_qubits_of(amps.size)
        if n < 1:
            raise SimulationError(f"a state needs at least one qubit, got length {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > atol:
            raise SimulationError(f"state norm {norm!r} is not 1")
        self.amplitudes = amps

    @classmethod
    def zeros(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def _wrap(cls, amps: np.ndarray) -> "StateVector":
        obj = cls.__new__(cls)
        obj.amplitudes = amps
        return obj

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __len__(self) -> int:
        return self.amplitudes.size

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits}, amplitudes={self.amplitudes!r})"


def _n_qubits_of(size: int) -> int:
    if size < 1 or size & (size - 1):
        return -1
    return size.bit_length() - 1


@dataclass(frozen=True)
class CircuitLayout:
    """Layered circuit: RY on every qubit, RX on every qubit, CNOT(q -> q+1).

    Parameters are flat, indexed ``layer * 2n + axis * n + qubit`` with
    axis 0 = RY and axis 1 = RX.
    """

    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 1:
            raise SimulationError("n_qubits and n_layers must both be >= 1")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    @property
    def n_params(self) -> int:
        return 2 * self.n_qubits * self.n_layers

    @property
    def params_per_layer(self) -> int:
        return 2 * self.n_qubits

    def param_index(self, layer: int, axis: int, qubit: int) -> int:
        if not (0 <= layer < self.n_layers and axis in (RY, RX) and 0 <= qubit < self.n_qubits):
            raise SimulationError(f"no parameter at (layer={layer}, axis={axis}, qubit={qubit})")
        return layer * 2 * self.n_qubits + axis * self.n_qubits + qubit

    def param_label(self, index: int) -> tuple[int, int, int]:
        layer, rest = divmod(index, 2 * self.n_qubits)
        axis, qubit = divmod(rest, self.n_qubits)
        return layer, axis, qubit

    def check_params(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise SimulationError(
                f"expected {self.n_params} parameters for {self.n_qubits} qubits x "
                f"{self.n_layers} layers, got shape {params.shape}"
            )
        return params

    @cached_property
    def entangler_perm(self) -> np.ndarray:
        """Gather indices for the whole CNOT chain: ``new = old[perm]``."""
        perm = np.arange(self.dim)
        for q in range(self.n_qubits - 1):
            perm = perm[_cnot_perm(self.n_qubits, q, q + 1)]
        return perm

    @cached_property
    def entangler_inverse(self) -> np.ndarray:
        inv = np.empty_like(self.entangler_perm)
        inv[self.entangler_perm] = np.arange(self.dim)
        return inv

    @cached_property
    def z_signs(self) -> np.ndarray:
        """``(n_qubits, dim)`` table of +1/-1 eigenvalues of Z_q per basis state."""
        idx = np.arange(self.dim)
        return np.stack([1.0 - 2.0 * ((idx >> q) & 1) for q in range(self.n_qubits)])


def _cnot_perm(n_qubits: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    return idx ^ (((idx >> control) & 1) << target)


def _check_qubit(n_qubits: int, qubit: int) -> None:
    if not (0 <= qubit < n_qubits):
        raise SimulationError(f"qubit index {qubit} out of range for {n_qubits} qubits")


# batched kernels -----------------------------------------------------------

def _rowsum(x: np.ndarray) -> np.ndarray:
    """Sum each row by repeated halving; bit-identical whatever the batch size."""
    x = x.reshape(x.shape[0], -1)
    while x.shape[1] > 1:
        if x.shape[1] & 1:
            x = np.concatenate([x, np.zeros((x.shape[0], 1), dtype=x.dtype)], axis=1)
        half = x.shape[1] // 2
        x = x[:, :half] + x[:, half:]
    return x[:, 0]


def _rotate(states: np.ndarray, qubit: int, c, s, axis: int) -> np.ndarray:
    """Apply RY/RX(theta) on ``qubit`` of every row, with c = cos(theta/2), s = sin(theta/2)."""
    b, dim = states.shape
    view = states.reshape(b, dim >> (qubit + 1), 2, 1 << qubit)
    a0, a1 = view[:, :, 0, :], view[:, :, 1, :]
    out = np.empty_like(view)
    if axis == RY:
        out[:, :, 0, :] = c * a0 - s * a1
        out[:, :, 1, :] = s * a0 + c * a1
    else:
        ms = -1j * s
        out[:, :, 0, :] = c * a0 + ms * a1
        out[:, :, 1, :] = ms * a0 + c * a1
    return out.reshape(b, dim)


def _as_batch(states) -> np.ndarray:
    states = np.asarray(states, dtype=np.complex128)
    if states.ndim == 1:
        states = states[None, :]
    if states.ndim != 2 or _n_qubits_of(states.shape[1]) < 1:
        raise SimulationError(f"states must have shape (batch, 2**n), got {states.shape}")
    return states


def batch_forward(layout: CircuitLayout, params, states) -> np.ndarray:
    """Run the layered circuit on each row of ``states``."""
    params = layout.check_params(params)
    psi = _as_batch(states)
    if psi.shape[1] != layout.dim:
        raise SimulationError(f"state dimension {psi.shape[1]} does not match {layout.n_qubits} qubits")
    n = layout.n_qubits
    half = 0.5 * params
    cos, sin = np.cos(half), np.sin(half)
    for layer in range(layout.n_layers):
        base = layer * 2 * n
        for axis in (RY, RX):
            for q in range(n):
                k = base + axis * n + q
                psi = _rotate(psi, q, cos[k], sin[k], axis)
        if n > 1:
            psi = psi[:, layout.entangler_perm]
    return psi


def batch_expectation_z(layout: CircuitLayout, states) -> np.ndarray:
    """``(batch, n_qubits)`` array of <Z_q> for every row."""
    probs = np.abs(_as_batch(states)) ** 2
    return np.stack([_rowsum(probs * layout.z_signs[q]) for q in range(layout.n_qubits)], axis=1)


def batch_adjoint(layout: CircuitLayout, params, final_states, weights) -> np.ndarray:
    """Reverse-sweep gradients of ``sum_q weights[b, q] * <Z_q>`` for every row b.

    ``final_states`` are the circuit outputs from :func:`batch_forward`;
    ``weights`` has shape ``(batch, n_qubits)`` (chain-rule seeds) or
    ``(n_qubits,)``.  Returns a ``(batch, n_params)`` array.
    """
    params = layout.check_params(params)
    psi = _as_batch(final_states)
    b, dim = psi.shape
    weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), (b, layout.n_qubits))
    # explicit fixed-order sum rather than a matmul: BLAS blocking varies with batch size
    diag = np.zeros((b, dim))
    for q in range(layout.n_qubits):
        diag += weights[:, q : q + 1] * layout.z_signs[q]
    lam = psi * diag
    n = layout.n_qubits
    half = 0.5 * params
    cos, sin = np.cos(half), np.sin(half)
    grads = np.empty((b, layout.n_params))
    for layer in reversed(range(layout.n_layers)):
        if n > 1:
            inv = layout.entangler_inverse
            psi, lam = psi[:, inv], lam[:, inv]
        base = layer * 2 * n
        for axis in (RX, RY):
            for q in reversed(range(n)):
                k = base + axis * n + q
                shape = (b, dim >> (q + 1), 2, 1 << q)
                pv, lv = psi.reshape(shape), lam.reshape(shape)
                p0, p1 = pv[:, :, 0, :], pv[:, :, 1, :]
                l0c, l1c = lv[:, :, 0, :].conj(), lv[:, :, 1, :].conj()
                if axis == RY:
                    # Im<lam|Y|psi> = Re(sum conj(l1) p0 - conj(l0) p1)
                    term = (l1c * p0 - l0c * p1).real
                else:
                    # Im<lam|X|psi> = Im(sum conj(l0) p1 + conj(l1) p0)
                    term = (l0c * p1 + l1c * p0).imag
                grads[:, k] = _rowsum(term)
                psi = _rotate(psi, q, cos[k], -sin[k], axis)
                lam = _rotate(lam, q, cos[k], -sin[k], axis)
    return grads


# single-state API ----------------------------------------------------------

def amplitude_encode(x, n_qubits: int | None = None) -> StateVector:
    """Normalize a real vector of length 2**n into the amplitudes of an n-qubit state."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = _n_qubits_of(x.size)
    if n < 1:
        raise SimulationError(f"input length {x.size} is not a power of two >= 2")
    if n_qubits is not None and n != n_qubits:
        raise SimulationError(f"input length {x.size} does not match {n_qubits} qubits")
    norm = np.linalg.norm(x)
    if not norm > 1e-12:
        raise EncodingError(f"cannot encode a vector with norm {norm!r}")
    return StateVector._wrap((x / norm).astype(np.complex128))


def _single_rotation(state: StateVector, qubit: int, theta: float, axis: int) -> StateVector:
    _check_qubit(state.n_qubits, qubit)
    out = _rotate(state.amplitudes[None, :], qubit, np.cos(theta / 2), np.sin(theta / 2), axis)
    return StateVector._wrap(out[0])


def apply_ry(state: StateVector, qubit: int, theta: float) -> StateVector:
    return _single_rotation(state, qubit, theta, RY)


def apply_rx(state: StateVector, qubit: int, theta: float) -> StateVector:
    return _single_rotation(state, qubit, theta, RX)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    n = state.n_qubits
    _check_qubit(n, control)
    _check_qubit(n, target)
    if control == target:
        raise SimulationError("CNOT control and target must differ")
    return StateVector._wrap(state.amplitudes[_cnot_perm(n, control, target)])


def run_circuit(layout: CircuitLayout, params, input_state: StateVector) -> StateVector:
    if input_state.n_qubits != layout.n_qubits:
        raise SimulationError(
            f"input state has {input_state.n_qubits} qubits, layout has {layout.n_qubits}"
        )
    return StateVector._wrap(batch_forward(layout, params, input_state.amplitudes)[0])


def expectation_z(state: StateVector, qubit: int) -> float:
    _check_qubit(state.n_qubits, qubit)
    idx = np.arange(len(state))
    signs = 1.0 - 2.0 * ((idx >> qubit) & 1)
    return float(np.sum(np.abs(state.amplitudes) ** 2 * signs))


def _observable_weights(n_qubits: int, observable) -> np.ndarray:
    """Accept ``[(qubit, weight), ...]`` or a dense per-qubit weight vector."""
    arr = np.asarray(observable, dtype=np.float64)
    if arr.ndim == 1 and arr.size == n_qubits:
        return arr
    weights = np.zeros(n_qubits)
    for qubit, weight in observable:
        qubit = int(qubit)
        _check_qubit(n_qubits, qubit)
        weights[qubit] += weight
    return weights


def adjoint_gradient(layout: CircuitLayout, params, input_state: StateVector, observable) -> np.ndarray:
    """Exact d<O>/d(theta) for ``O = sum_q w_q Z_q`` in one forward and one reverse sweep."""
    weights = _observable_weights(layout.n_qubits, observable)
    final = batch_forward(layout, params, input_state.amplitudes)
    return batch_adjoint(layout, params, final, weights)[0]


def observable_value(layout: CircuitLayout, params, input_state: StateVector, observable) -> float:
    """<O> for ``O = sum_q w_q Z_q`` on the circuit output."""
    weights = _observable_weights(layout.n_qubits, observable)
    final = batch_forward(layout, params, input_state.amplitudes)
    return float(batch_expectation_z(layout, final)[0] @ weights)
