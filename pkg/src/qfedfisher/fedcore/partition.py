"""Non-IID client partitioning and per-round client sampling."""
from __future__ import annotations

import math

import numpy as np

from ..seeds import derive_seed


class InsufficientDataError(ValueError):
    pass


def apportion(weights, total: int) -> np.ndarray:
    """Split ``total`` into integers proportional to ``weights`` (largest remainder).

    Ties in the fractional parts go to the lowest index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if total == 0 or weights.size == 0:
        return np.zeros(weights.size, dtype=np.int64)
    s = weights.sum()
    weights = np.full(weights.size, 1.0 / weights.size) if s <= 0 else weights / s
    raw = weights * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _capped_counts(props: np.ndarray, quota: int, available: np.ndarray) -> np.ndarray:
    counts = apportion(props, quota)
    while True:
        over = counts > available
        if not over.any():
            return counts
        deficit = int((counts - available)[over].sum())
        counts = np.minimum(counts, available)
        room = counts < available
        extra = np.zeros_like(counts)
        extra[room] = apportion(props[room], deficit)
        counts = counts + extra


def dirichlet_partition(labels, n_clients: int, alpha: float, samples_per_client: int, seed: int,
                        n_classes: int | None = None) -> list[np.ndarray]:
    """Assign ``samples_per_client`` dataset indices to each client.

    Class pools are shuffled once (in class order).  Then, in client-id order,
    each client draws class proportions ~ Dirichlet(alpha * 1_K), turns them
    into integer counts by largest remainder, and takes that many indices off
    the front of each pool.  When a pool runs dry the shortfall is
    re-apportioned over the classes that still have samples, in proportion to
    the client's own class proportions.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if alpha <= 0:
        raise ValueError("Dirichlet concentration must be positive")
    need = n_clients * samples_per_client
    if need > labels.size:
        raise InsufficientDataError(
            f"{n_clients} clients x {samples_per_client} samples needs {need} items, "
            f"dataset has {labels.size}"
        )
    k = int(labels.max()) + 1 if n_classes is None else n_classes
    rng = np.random.default_rng(seed)
    pools = [rng.permutation(np.flatnonzero(labels == c)) for c in range(k)]
    taken = np.zeros(k, dtype=np.int64)
    sizes = np.array([p.size for p in pools])
    parts = []
    for _ in range(n_clients):
        props = rng.dirichlet(np.full(k, float(alpha)))
        counts = _capped_counts(props, samples_per_client, sizes - taken)
        idx = [pools[c][taken[c] : taken[c] + counts[c]] for c in range(k)]
        taken += counts
        parts.append(np.sort(np.concatenate(idx)))
    return parts


def sample_clients(n_clients: int, fraction: float, round_: int, seed: int) -> np.ndarray:
    """Sorted ids of ``ceil(fraction * n_clients)`` clients, drawn without replacement."""
    if not 0 < fraction <= 1:
        raise ValueError("participation fraction must lie in (0, 1]")
    m = max(1, math.ceil(round(fraction * n_clients, 9)))
    if m >= n_clients:
        return np.arange(n_clients)
    rng = np.random.default_rng(derive_seed(seed, round_, -1, "sample-clients"))
    return np.sort(rng.choice(n_clients, size=m, replace=False))
