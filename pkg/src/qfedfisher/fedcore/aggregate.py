"""Server-side aggregation strategies and client-side parameter retention.

All reductions run over clients sorted by id, so results do not depend on
the order in which updates arrive.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import Adam

FISHER_FLOOR = 1e-12


@dataclass
class ClientUpdate:
    """What a client sends back after local training."""

    client_id: int
    params: np.ndarray
    n_samples: int
    fisher: np.ndarray | None = None


@dataclass
class GlobalModel:
    params: np.ndarray
    round: int = 0
    adam: Adam | None = field(default=None, repr=False)


def _ordered(updates) -> list[ClientUpdate]:
    updates = sorted(updates, key=lambda u: u.client_id)
    if not updates:
        raise ValueError("aggregation needs at least one client update")
    shape = np.shape(updates[0].params)
    for u in updates:
        if np.shape(u.params) != shape:
            raise ValueError(f"client {u.client_id} sent parameters of shape {np.shape(u.params)}, expected {shape}")
    return updates


def client_weights(updates) -> np.ndarray:
    """p_i = D_i / sum_j D_j, in client-id order."""
    sizes = np.array([u.n_samples for u in _ordered(updates)], dtype=np.float64)
    if (sizes <= 0).any():
        raise ValueError("every participating client needs at least one sample")
    return sizes / sizes.sum()


def aggregate_fedavg(updates) -> np.ndarray:
    updates = _ordered(updates)
    weights = client_weights(updates)
    out = weights[0] * np.asarray(updates[0].params, dtype=np.float64)
    for w, u in zip(weights[1:], updates[1:]):
        out = out + w * np.asarray(u.params, dtype=np.float64)
    return out


def aggregate_fedadam(updates, global_model: GlobalModel, server_lr: float = 1e-2) -> np.ndarray:
    """One server Adam step on the pseudo-gradient ``global - average``.

    The optimizer state lives on ``global_model`` and persists across rounds.
    """
    avg = aggregate_fedavg(updates)
    if global_model.adam is None:
        global_model.adam = Adam(lr=server_lr)
    pseudo_grad = np.asarray(global_model.params, dtype=np.float64) - avg
    return global_model.adam.step(global_model.params, pseudo_grad)


def aggregate_fedfisher(updates, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Fisher-weighted parameter average with plain-average fallback.

    For every coordinate j, ``theta[j] = sum_i F_ij theta_ij / sum_i F_ij``
    unless the summed Fisher is below ``delta`` (or numerically zero), in
    which case the size-weighted average is used and j is reported as
    substituted.  Returns ``(theta, substituted_indices)``.
    """
    if delta < 0:
        raise ValueError("Fisher threshold must be non-negative")
    updates = _ordered(updates)
    for u in updates:
        if u.fisher is None or np.shape(u.fisher) != np.shape(u.params):
            raise ValueError(f"client {u.client_id} Fisher vector missing or mis-shaped")
    avg = aggregate_fedavg(updates)
    g_s = np.zeros_like(avg)
    f_s = np.zeros_like(avg)
    for u in updates:
        g_s = g_s + u.fisher * u.params
        f_s = f_s + u.fisher
    keep = (f_s >= delta) & (f_s > FISHER_FLOOR)
    theta = avg.copy()
    theta[keep] = g_s[keep] / f_s[keep]
    return theta, np.flatnonzero(~keep)


def client_retention(client_params, client_fisher, global_params, delta: float) -> np.ndarray:
    """Adopt global values where the client's Fisher is below ``delta``, keep the rest."""
    client_params = np.asarray(client_params, dtype=np.float64)
    client_fisher = np.asarray(client_fisher, dtype=np.float64)
    global_params = np.asarray(global_params, dtype=np.float64)
    if not client_params.shape == client_fisher.shape == global_params.shape:
        raise ValueError("client params, client Fisher and global params must share a shape")
    return np.where(client_fisher < delta, global_params, client_params)
