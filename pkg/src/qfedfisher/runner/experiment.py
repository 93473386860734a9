"""Run configured experiments and write plot-ready artifacts.

Artifacts per strategy ``s`` in ``out_dir``:

``metrics_<s>.csv``
    round, test_accuracy, test_loss, mean_client_train_loss,
    substituted_count, wall_time_s, client_time_s
``confusion_<s>.csv``
    final confusion matrix, rows = actual class, columns = predicted class
``metadata_<s>.json``
    schema ``qfedfisher.run/1``: strategy, seed, code_version, config
    (fully resolved), data sizes, totals

plus one ``partition.csv`` (client_id, class_0 ... class_{K-1} counts)
shared by all strategies.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__, dataio
from ..fedcore import (
    ClientRecord,
    Evaluation,
    GlobalModel,
    RoundReport,
    dirichlet_partition,
    init_params,
    run_round,
)
from ..qsim import CircuitLayout
from ..seeds import derive_seed
from ..vqc import Task
from .config import ExperimentConfig

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "round",
    "test_accuracy",
    "test_loss",
    "mean_client_train_loss",
    "substituted_count",
    "wall_time_s",
    "client_time_s",
)
METADATA_SCHEMA = "qfedfisher.run/1"


@dataclass
class StrategyResult:
    strategy: str
    reports: list[RoundReport]
    final: Evaluation
    params: np.ndarray


def load_data(config: ExperimentConfig) -> tuple[dataio.Dataset, dataio.Dataset]:
    """Load, filter, downsample and encode-prepare the train and test sets."""
    c = config
    if c.dataset == "mnist-bundled":
        train, test = dataio.load_bundled_mnist("train"), dataio.load_bundled_mnist("test")
    elif c.dataset == "mnist":
        train = dataio.load_mnist_idx(c.train_images, c.train_labels, "train")
        test = dataio.load_mnist_idx(c.test_images, c.test_labels, "test")
    elif c.dataset == "csv":
        train = dataio.load_feature_csv(c.train_csv, c.feature_dim, c.task_classes, "train")
        if c.test_csv:
            test = dataio.load_feature_csv(c.test_csv, c.feature_dim, c.task_classes, "test")
        else:
            train, test = dataio.train_test_split(train, c.test_fraction, derive_seed(c.seed, 0, -1, "split"))
    else:
        # one draw so train and test share the class geometry
        n = c.synthetic_train + c.synthetic_test
        pool = dataio.synthesize_binary(n, c.feature_dim, c.separation, derive_seed(c.seed, 0, -1, "synthetic"))
        train, test = dataio.train_test_split(pool, c.synthetic_test / n, derive_seed(c.seed, 0, -1, "split"))
    if c.classes:
        train, test = dataio.select_classes(train, c.classes), dataio.select_classes(test, c.classes)
    if c.downsample:
        train, test = dataio.downsample_images(train, c.downsample), dataio.downsample_images(test, c.downsample)
    if c.test_limit and len(test) > c.test_limit:
        test = test.subset(np.arange(c.test_limit))
    return dataio.prepare_for_encoding(train, c.target_dim), dataio.prepare_for_encoding(test, c.target_dim)


def make_partitions(config: ExperimentConfig, train: dataio.Dataset) -> list[np.ndarray]:
    return dirichlet_partition(
        train.labels,
        config.n_clients,
        config.dirichlet_alpha,
        config.samples_per_client,
        derive_seed(config.seed, 0, -1, "partition"),
        n_classes=train.n_classes,
    )


def run_strategy(config: ExperimentConfig, strategy: str, train: dataio.Dataset, test: dataio.Dataset,
                 partitions: list[np.ndarray], executor=None) -> StrategyResult:
    """Train one strategy from the shared initial model on the shared partitions."""
    layout = CircuitLayout(config.n_qubits, config.n_layers)
    task = Task.for_classes(train.n_classes)
    task.check(layout)
    round_config = config.round_config(strategy)
    clients = [ClientRecord(i, train.features[p], train.labels[p]) for i, p in enumerate(partitions)]
    model = GlobalModel(init_params(layout, derive_seed(config.seed, 0, -1, "init")))
    test_states = test.features.astype(np.complex128)
    reports = []
    final = None
    for _ in range(config.rounds):
        model, report, final = run_round(
            model, clients, round_config, layout=layout, task=task,
            test_states=test_states, test_labels=test.labels, executor=executor,
        )
        reports.append(report)
        log.info("%s round %d: acc=%.4f loss=%.4f", strategy, report.round, report.test_accuracy, report.test_loss)
    return StrategyResult(strategy, reports, final, model.params)


def write_metrics(path, reports: list[RoundReport]) -> None:
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRIC_COLUMNS)
        for r in reports:
            writer.writerow([
                r.round, repr(r.test_accuracy), repr(r.test_loss), repr(r.mean_client_train_loss),
                r.substituted_count, repr(r.wall_time_s), repr(r.client_time_s),
            ])


def write_confusion(path, confusion: np.ndarray) -> None:
    k = confusion.shape[0]
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["actual"] + [f"pred_{j}" for j in range(k)])
        for i in range(k):
            writer.writerow([i] + [int(v) for v in confusion[i]])


def write_partition(path, partitions, labels, n_classes: int) -> None:
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["client_id"] + [f"class_{j}" for j in range(n_classes)])
        for cid, idx in enumerate(partitions):
            writer.writerow([cid] + np.bincount(labels[idx], minlength=n_classes).tolist())


def metadata(config: ExperimentConfig, result: StrategyResult, n_train: int, n_test: int) -> dict:
    reports = result.reports
    return {
        "schema": METADATA_SCHEMA,
        "strategy": result.strategy,
        "seed": config.seed,
        "code_version": __version__,
        "config": config.to_dict(),
        "data": {"train_size": n_train, "test_size": n_test},
        "totals": {
            "rounds": len(reports),
            "final_test_accuracy": reports[-1].test_accuracy,
            "final_test_loss": reports[-1].test_loss,
            "best_test_accuracy": max(r.test_accuracy for r in reports),
            "total_substituted": sum(r.substituted_count for r in reports),
            "total_wall_time_s": sum(r.wall_time_s for r in reports),
            "total_client_time_s": sum(r.client_time_s for r in reports),
            "total_fisher_time_s": sum(r.fisher_time_s for r in reports),
        },
        "final_confusion": result.final.confusion.tolist(),
    }


def run_experiment(config: ExperimentConfig, write: bool = True) -> dict[str, StrategyResult]:
    """Run every configured strategy on identical partitions and client draws."""
    train, test = load_data(config)
    partitions = make_partitions(config, train)
    out = Path(config.out_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        write_partition(out / "partition.csv", partitions, train.labels, train.n_classes)
    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    results = {}
    try:
        for strategy in config.strategies:
            res = run_strategy(config, strategy, train, test, partitions, executor)
            results[strategy] = res
            if write:
                write_metrics(out / f"metrics_{strategy}.csv", res.reports)
                write_confusion(out / f"confusion_{strategy}.csv", res.final.confusion)
                doc = metadata(config, res, len(train), len(test))
                (out / f"metadata_{strategy}.json").write_text(json.dumps(doc, indent=2) + "\n")
    finally:
        if executor is not None:
            executor.shutdown()
    return results
