"""Client-side training and the federated round loop."""
from __future__ import annotations

import time
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from ..qsim import CircuitLayout
from ..seeds import derive_seed
from ..vqc import Task, fisher_diagonal, loss_and_grad, normalize_fisher_layerwise, predict_proba
from .aggregate import (
    ClientUpdate,
    GlobalModel,
    aggregate_fedadam,
    aggregate_fedavg,
    aggregate_fedfisher,
    client_retention,
)
from .optim import Adam
from .partition import sample_clients

STRATEGIES = ("fedavg", "fedadam", "fedfisher")


@dataclass
class ClientRecord:
    """A client's partition plus whatever it remembers between rounds."""

    client_id: int
    states: np.ndarray  # (D_i, 2**n) encoded inputs
    labels: np.ndarray
    params: np.ndarray | None = None
    fisher: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.complex128)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.states.shape[0] != self.labels.size:
            raise ValueError(f"client {self.client_id}: states and labels differ in length")

    @property
    def n_samples(self) -> int:
        return int(self.labels.size)


@dataclass
class RoundConfig:
    n_clients: int = 10
    participation: float = 1.0
    local_epochs: int = 1
    batch_size: int = 32
    local_lr: float = 1e-3
    server_lr: float = 1e-2
    fisher_threshold: float = 0.01
    dirichlet_alpha: float = 0.5
    samples_per_client: int = 500
    strategy: str = "fedfisher"
    client_retention: bool = False
    fisher_mode: str = "sample"
    rounds: int = 100
    seed: int = 0
    record_timing: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not 0 < self.participation <= 1:
            raise ValueError("participation must lie in (0, 1]")
        if self.fisher_threshold < 0:
            raise ValueError("fisher_threshold must be >= 0")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be > 0")
        if self.n_clients < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("n_clients, local_epochs and batch_size must be >= 1")


@dataclass
class LocalResult:
    client_id: int
    params: np.ndarray
    fisher: np.ndarray  # layer-wise normalized
    train_loss: float
    epoch_losses: list[float]
    n_samples: int
    train_time: float = 0.0
    fisher_time: float = 0.0


@dataclass
class Evaluation:
    accuracy: float
    loss: float
    confusion: np.ndarray  # confusion[actual, predicted]


@dataclass
class RoundReport:
    round: int
    test_accuracy: float
    test_loss: float
    mean_client_train_loss: float
    substituted_count: int
    wall_time_s: float
    client_time_s: float
    fisher_time_s: float
    participants: list[int] = field(default_factory=list)


def init_params(layout: CircuitLayout, seed: int) -> np.ndarray:
    """Kaiming-style draw: Normal(0, sqrt(2 / n_qubits)) per rotation angle."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(2.0 / layout.n_qubits), layout.n_params)


def local_train(
    client: ClientRecord,
    start_params,
    layout: CircuitLayout,
    task: Task,
    *,
    epochs: int = 1,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
    fisher_mode: str = "sample",
    timed: bool = True,
) -> LocalResult:
    """Mini-batch Adam on the client's partition, then its normalized Fisher.

    The optimizer starts fresh on every call.  ``train_loss`` is the mean
    per-sample loss seen during training (before each step).
    """
    if client.n_samples == 0:
        raise ValueError(f"client {client.client_id} has an empty partition")
    clock = time.perf_counter if timed else (lambda: 0.0)
    t0 = clock()
    params = layout.check_params(start_params).copy()
    rng = np.random.default_rng(seed)
    opt = Adam(lr=lr)
    epoch_losses = []
    for _ in range(epochs):
        order = rng.permutation(client.n_samples)
        total = 0.0
        for start in range(0, order.size, batch_size):
            batch = order[start : start + batch_size]
            losses, grads = loss_and_grad(layout, params, client.states[batch], client.labels[batch], task)
            total += float(losses.sum())
            params = opt.step(params, grads.mean(axis=0))
        epoch_losses.append(total / order.size)
    t1 = clock()
    raw = fisher_diagonal(
        layout, params, client.states, client.labels, task, mode=fisher_mode, batch_size=batch_size
    )
    fisher = normalize_fisher_layerwise(raw, layout)
    t2 = clock()
    return LocalResult(
        client_id=client.client_id,
        params=params,
        fisher=fisher,
        train_loss=float(np.mean(epoch_losses)),
        epoch_losses=epoch_losses,
        n_samples=client.n_samples,
        train_time=t1 - t0,
        fisher_time=t2 - t1,
    )


def evaluate(params, layout: CircuitLayout, task: Task, states, labels, chunk: int = 512) -> Evaluation:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty test set")
    probs = np.concatenate(
        [predict_proba(layout, params, states[i : i + chunk], task) for i in range(0, labels.size, chunk)]
    )
    predicted = probs.argmax(axis=1)
    p_true = np.clip(probs[np.arange(labels.size), labels], 1e-12, 1 - 1e-12)
    confusion = np.zeros((task.n_classes, task.n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predicted), 1)
    return Evaluation(
        accuracy=float(np.mean(predicted == labels)),
        loss=float(np.mean(-np.log(p_true))),
        confusion=confusion,
    )


def _start_params(client: ClientRecord, global_params: np.ndarray, config: RoundConfig) -> np.ndarray:
    retain = (
        config.client_retention
        and config.strategy == "fedfisher"
        and client.params is not None
        and client.fisher is not None
    )
    if retain:
        return client_retention(client.params, client.fisher, global_params, config.fisher_threshold)
    return global_params


def run_round(
    global_model: GlobalModel,
    clients: list[ClientRecord],
    config: RoundConfig,
    *,
    layout: CircuitLayout,
    task: Task,
    test_states,
    test_labels,
    executor: Executor | None = None,
) -> tuple[GlobalModel, RoundReport, Evaluation]:
    """Sample, train, aggregate, evaluate.  Client records are updated in place."""
    clock = time.perf_counter if config.record_timing else (lambda: 0.0)
    t0 = clock()
    rnd = global_model.round + 1
    selected = sample_clients(len(clients), config.participation, rnd, config.seed)
    by_id = {c.client_id: c for c in clients}

    def work(cid):
        client = by_id[int(cid)]
        start = _start_params(client, global_model.params, config)
        return local_train(
            client,
            start,
            layout,
            task,
            epochs=config.local_epochs,
            batch_size=config.batch_size,
            lr=config.local_lr,
            seed=derive_seed(config.seed, rnd, int(cid), "local-train"),
            fisher_mode=config.fisher_mode,
            timed=config.record_timing,
        )

    mapper = executor.map if executor is not None else map
    results = list(mapper(work, selected))
    for res in results:
        by_id[res.client_id].params = res.params
        by_id[res.client_id].fisher = res.fisher
    updates = [ClientUpdate(r.client_id, r.params, r.n_samples, r.fisher) for r in results]

    substituted = np.empty(0, dtype=np.int64)
    if config.strategy == "fedavg":
        new_params = aggregate_fedavg(updates)
    elif config.strategy == "fedadam":
        new_params = aggregate_fedadam(updates, global_model, config.server_lr)
    else:
        new_params, substituted = aggregate_fedfisher(updates, config.fisher_threshold)

    new_model = GlobalModel(params=new_params, round=rnd, adam=global_model.adam)
    ev = evaluate(new_params, layout, task, test_states, test_labels)
    report = RoundReport(
        round=rnd,
        test_accuracy=ev.accuracy,
        test_loss=ev.loss,
        mean_client_train_loss=float(np.mean([r.train_loss for r in results])),
        substituted_count=int(substituted.size),
        wall_time_s=clock() - t0,
        client_time_s=float(sum(r.train_time + r.fisher_time for r in results)),
        fisher_time_s=float(sum(r.fisher_time for r in results)),
        participants=[int(c) for c in selected],
    )
    return new_model, report, ev
