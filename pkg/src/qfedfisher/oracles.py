"""Brute-force reference computations.

Everything here is written independently of the fast paths it is used to
check: circuits are built as dense Kronecker-product unitaries, gradients by
parameter shifts and finite differences, aggregation with plain Python loops.
Slow by design; keep instances small.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _rot(pauli, theta):
    # exp(-i theta P / 2) for an involutory P
    return math.cos(theta / 2) * _I2 - 1j * math.sin(theta / 2) * pauli


def embed_single(n_qubits, qubit, gate):
    """Full 2**n matrix of ``gate`` on ``qubit`` (qubit 0 = least-significant bit)."""
    if not 0 <= qubit < n_qubits:
        raise ValueError("qubit out of range")
    # I (higher qubits) (x) gate (x) I (lower qubits)
    high = np.eye(2 ** (n_qubits - 1 - qubit), dtype=complex)
    low = np.eye(2**qubit, dtype=complex)
    return np.kron(high, np.kron(gate, low))


def cnot_matrix(n_qubits, control, target):
    return _cnot_matrix(n_qubits, control, target).copy()


@lru_cache(maxsize=None)
def _cnot_matrix(n_qubits, control, target):
    dim = 2**n_qubits
    mat = np.zeros((dim, dim), dtype=complex)
    for j in range(dim):
        bits = [(j >> q) & 1 for q in range(n_qubits)]
        if bits[control]:
            bits[target] ^= 1
        i = sum(b << q for q, b in enumerate(bits))
        mat[i, j] = 1.0
    mat.flags.writeable = False
    return mat


@lru_cache(maxsize=None)
def _chain(n_qubits):
    u = np.eye(2**n_qubits, dtype=complex)
    for q in range(n_qubits - 1):
        u = _cnot_matrix(n_qubits, q, q + 1) @ u
    u.flags.writeable = False
    return u


def circuit_unitary(n_qubits, n_layers, params):
    """Dense unitary of the layered RY / RX / linear-CNOT circuit."""
    params = list(map(float, params))
    if len(params) != 2 * n_qubits * n_layers:
        raise ValueError("parameter count mismatch")
    u = np.eye(2**n_qubits, dtype=complex)
    pos = 0
    for _ in range(n_layers):
        for pauli in (_Y, _X):
            for q in range(n_qubits):
                u = embed_single(n_qubits, q, _rot(pauli, params[pos])) @ u
                pos += 1
        u = _chain(n_qubits) @ u
    return u


def observable_matrix(n_qubits, weights):
    obs = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
    for q, w in enumerate(weights):
        obs += w * embed_single(n_qubits, q, _Z)
    return obs


def expectation(n_qubits, n_layers, params, input_amplitudes, weights):
    psi = circuit_unitary(n_qubits, n_layers, params) @ np.asarray(input_amplitudes, dtype=complex)
    return float(np.real(np.vdot(psi, observable_matrix(n_qubits, weights) @ psi)))


def parameter_shift_gradient(n_qubits, n_layers, params, input_amplitudes, weights):
    params = np.asarray(params, dtype=float)
    grad = np.zeros(params.size)
    for j in range(params.size):
        plus, minus = params.copy(), params.copy()
        plus[j] += math.pi / 2
        minus[j] -= math.pi / 2
        grad[j] = 0.5 * (
            expectation(n_qubits, n_layers, plus, input_amplitudes, weights)
            - expectation(n_qubits, n_layers, minus, input_amplitudes, weights)
        )
    return grad


def central_difference(fn, params, h=1e-4):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros(params.size)
    for j in range(params.size):
        plus, minus = params.copy(), params.copy()
        plus[j] += h
        minus[j] -= h
        grad[j] = (fn(plus) - fn(minus)) / (2 * h)
    return grad


def fedavg(params_by_client, sizes):
    total = sum(sizes)
    n_params = len(params_by_client[0])
    out = [0.0] * n_params
    for theta, size in zip(params_by_client, sizes):
        w = size / total
        for j in range(n_params):
            out[j] += w * theta[j]
    return out


def fedfisher(params_by_client, fishers, sizes, delta):
    """Fisher-weighted average with plain-average substitution below ``delta``.

    Returns ``(theta, substituted)`` where ``substituted`` is a sorted list.
    """
    avg = fedavg(params_by_client, sizes)
    theta, substituted = [], []
    for j in range(len(avg)):
        g_s = sum(f[j] * p[j] for f, p in zip(fishers, params_by_client))
        f_s = sum(f[j] for f in fishers)
        if f_s < delta or f_s <= 1e-12:
            theta.append(avg[j])
            substituted.append(j)
        else:
            theta.append(g_s / f_s)
    return theta, substituted


def adam_sequence(x0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Hand-stepped Adam recursion; returns the iterate after every step."""
    x = list(map(float, x0))
    m = [0.0] * len(x)
    v = [0.0] * len(x)
    out = []
    for t, g in enumerate(grads, start=1):
        for j in range(len(x)):
            m[j] = beta1 * m[j] + (1 - beta1) * g[j]
            v[j] = beta2 * v[j] + (1 - beta2) * g[j] ** 2
            mhat = m[j] / (1 - beta1**t)
            vhat = v[j] / (1 - beta2**t)
            x[j] -= lr * mhat / (math.sqrt(vhat) + eps)
        out.append(list(x))
    return out
