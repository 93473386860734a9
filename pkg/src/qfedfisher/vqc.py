"""Variational quantum classifier on top of :mod:`qfedfisher.qsim`.

Binary tasks read the last qubit: p(class 1) = (1 - <Z_last>) / 2.
Multiclass tasks with K classes take softmax over <Z_0> ... <Z_{K-1}>.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import CircuitLayout, StateVector, batch_adjoint, batch_expectation_z, batch_forward

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class Task:
    n_classes: int
    binary: bool

    @classmethod
    def make_binary(cls) -> "Task":
        return cls(2, True)

    @classmethod
    def multiclass(cls, n_classes: int) -> "Task":
        if n_classes < 2:
            raise ValueError("multiclass task needs at least two classes")
        return cls(n_classes, False)

    @classmethod
    def for_classes(cls, n_classes: int) -> "Task":
        return cls.make_binary() if n_classes == 2 else cls.multiclass(n_classes)

    def check(self, layout: CircuitLayout) -> None:
        if not self.binary and self.n_classes > layout.n_qubits:
            raise ValueError(
                f"{self.n_classes} classes need at least {self.n_classes} readout qubits, "
                f"layout has {layout.n_qubits}"
            )


@dataclass
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _readout(task: Task, layout: CircuitLayout, expz: np.ndarray):
    """Map ``(batch, n_qubits)`` <Z> values to (logits, probabilities)."""
    if task.binary:
        logits = expz[:, -1:]
        p1 = (1.0 - logits[:, 0]) / 2.0
        return logits, np.stack([1.0 - p1, p1], axis=1)
    logits = expz[:, : task.n_classes]
    return logits, _softmax(logits)


def _as_states(states) -> np.ndarray:
    if isinstance(states, StateVector):
        return states.amplitudes[None, :]
    states = np.asarray(states)
    return states[None, :] if states.ndim == 1 else states


def predict_proba(layout: CircuitLayout, params, states, task: Task) -> np.ndarray:
    """Class probabilities, shape ``(batch, n_classes)``."""
    task.check(layout)
    final = batch_forward(layout, params, _as_states(states))
    return _readout(task, layout, batch_expectation_z(layout, final))[1]


def forward(layout: CircuitLayout, params, encoded_input, task: Task) -> Prediction:
    task.check(layout)
    final = batch_forward(layout, params, _as_states(encoded_input))
    logits, probs = _readout(task, layout, batch_expectation_z(layout, final))
    # np.argmax returns the first maximum, i.e. ties go to the lowest index
    return Prediction(logits[0], probs[0], int(np.argmax(probs[0])))


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def loss(prediction: Prediction, label: int) -> float:
    """Cross-entropy of one prediction, probability clamped to [1e-12, 1 - 1e-12]."""
    probs = prediction.probabilities
    if not 0 <= label < probs.size:
        raise ValueError(f"label {label} out of range for {probs.size} classes")
    return float(-np.log(np.clip(probs[label], PROB_CLAMP, 1.0 - PROB_CLAMP)))


def loss_and_grad(layout: CircuitLayout, params, states, labels, task: Task):
    """Per-sample cross-entropy losses ``(batch,)`` and gradients ``(batch, n_params)``."""
    task.check(layout)
    states = _as_states(states)
    labels = _check_labels(labels, task.n_classes)
    if labels.size != states.shape[0]:
        raise ValueError("one label per state is required")
    rows = np.arange(labels.size)
    final = batch_forward(layout, params, states)
    expz = batch_expectation_z(layout, final)
    _, probs = _readout(task, layout, expz)
    p_true = probs[rows, labels]
    clipped = np.clip(p_true, PROB_CLAMP, 1.0 - PROB_CLAMP)
    losses = -np.log(clipped)
    live = (p_true == clipped).astype(np.float64)

    seeds = np.zeros_like(expz)
    if task.binary:
        # p_true = (1 + z) / 2 for label 0 and (1 - z) / 2 for label 1
        dp_dz = np.where(labels == 1, -0.5, 0.5)
        seeds[:, -1] = live * (-dp_dz / clipped)
    else:
        onehot = np.zeros_like(probs)
        onehot[rows, labels] = 1.0
        seeds[:, : task.n_classes] = live[:, None] * (probs - onehot)
    return losses, batch_adjoint(layout, params, final, seeds)


def sample_gradient(layout: CircuitLayout, params, encoded_input, label: int, task: Task) -> np.ndarray:
    """d(loss)/d(theta) for one encoded sample."""
    return loss_and_grad(layout, params, encoded_input, [label], task)[1][0]


def _exact_column_mean(values: np.ndarray) -> np.ndarray:
    # sorting first makes the reduction independent of row order
    return np.sort(values, axis=0).sum(axis=0) / values.shape[0]


def fisher_diagonal(
    layout: CircuitLayout,
    params,
    states,
    labels,
    task: Task,
    *,
    mode: str = "sample",
    batch_size: int = 32,
    chunk: int = 256,
) -> np.ndarray:
    """Empirical Fisher diagonal: mean over samples of squared log-likelihood gradients.

    ``mode="batch"`` squares mini-batch mean gradients instead (consecutive
    batches of ``batch_size`` in dataset order) and averages over batches.
    """
    states = _as_states(states)
    labels = _check_labels(labels, task.n_classes)
    if labels.size == 0:
        raise ValueError("Fisher information needs at least one sample")
    grads = np.concatenate(
        [
            loss_and_grad(layout, params, states[i : i + chunk], labels[i : i + chunk], task)[1]
            for i in range(0, labels.size, chunk)
        ]
    )
    if mode == "sample":
        return _exact_column_mean(grads * grads)
    if mode == "batch":
        batch_means = np.stack(
            [grads[i : i + batch_size].mean(axis=0) for i in range(0, labels.size, batch_size)]
        )
        return (batch_means * batch_means).mean(axis=0)
    raise ValueError(f"unknown Fisher mode {mode!r}")


def normalize_fisher_layerwise(fisher, layout: CircuitLayout) -> np.ndarray:
    """Min-max scale each layer's block of 2n values to [0, 1]; flat layers map to 0."""
    fisher = np.asarray(fisher, dtype=np.float64)
    blocks = fisher.reshape(-1, layout.params_per_layer)
    lo = blocks.min(axis=1, keepdims=True)
    span = blocks.max(axis=1, keepdims=True) - lo
    flat = span < 1e-12
    out = np.where(flat, 0.0, (blocks - lo) / np.where(flat, 1.0, span))
    return out.reshape(fisher.shape)
