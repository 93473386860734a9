"""Experiment configuration: presets, YAML files and flag overrides.

A config file is a flat YAML mapping whose keys are the field names of
:class:`ExperimentConfig`.  Resolution order, later wins::

    built-in defaults < preset < config file < command-line flags

``out_dir`` falls back to ``$QFEDFISHER_OUT`` (then ``runs``) when neither
the file nor a flag sets it.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..fedcore import STRATEGIES, RoundConfig

OUT_ENV = "QFEDFISHER_OUT"
DATASET_KINDS = ("mnist", "mnist-bundled", "csv", "synthetic")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # dataset
    dataset: str = "mnist"
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_csv: str | None = None
    test_csv: str | None = None
    test_fraction: float = 0.2
    feature_dim: int | None = None
    n_classes: int | None = None
    classes: list[int] | None = None
    downsample: int | None = None
    test_limit: int | None = None
    synthetic_train: int = 5000
    synthetic_test: int = 1000
    separation: float = 10.0
    target_dim: int = 1024
    # circuit
    n_qubits: int = 10
    n_layers: int = 60
    # federation
    n_clients: int = 100
    participation: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    local_lr: float = 1e-3
    server_lr: float = 1e-2
    fisher_threshold: float = 0.01
    dirichlet_alpha: float = 0.5
    samples_per_client: int = 500
    client_retention: bool = False
    fisher_mode: str = "sample"
    rounds: int = 300
    strategies: list[str] = field(default_factory=lambda: list(STRATEGIES))
    # run
    seed: int = 0
    out_dir: str | None = None
    threads: int = 1
    record_timing: bool = True

    @property
    def task_classes(self) -> int:
        if self.classes:
            return len(self.classes)
        if self.n_classes:
            return self.n_classes
        return 10 if self.dataset.startswith("mnist") else 2

    def round_config(self, strategy: str) -> RoundConfig:
        return RoundConfig(
            n_clients=self.n_clients,
            participation=self.participation,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            local_lr=self.local_lr,
            server_lr=self.server_lr,
            fisher_threshold=self.fisher_threshold,
            dirichlet_alpha=self.dirichlet_alpha,
            samples_per_client=self.samples_per_client,
            strategy=strategy,
            client_retention=self.client_retention,
            fisher_mode=self.fisher_mode,
            rounds=self.rounds,
            seed=self.seed,
            record_timing=self.record_timing,
        )

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS: dict[str, dict] = {
    # full experimental protocol on MNIST; needs the official IDX files
    "mnist-paper": dict(
        dataset="mnist", n_qubits=10, target_dim=1024, n_layers=60, n_clients=100,
        participation=0.05, dirichlet_alpha=0.5, samples_per_client=500, rounds=300,
    ),
    # binary 11-qubit protocol on precomputed 2048-dim features from CSV
    "binary-paper": dict(
        dataset="csv", feature_dim=2048, n_classes=2, n_qubits=11, target_dim=2048, n_layers=60,
        n_clients=10, participation=1.0, dirichlet_alpha=0.1, samples_per_client=500, rounds=100,
    ),
    # desk-scale MNIST: digits 0-3, 8x8 images on 6 qubits, bundled data
    "mnist-small": dict(
        dataset="mnist-bundled", classes=[0, 1, 2, 3], downsample=8, n_qubits=6, target_dim=64,
        n_layers=20, n_clients=20, participation=0.25, dirichlet_alpha=0.5,
        samples_per_client=200, rounds=40,
    ),
    # desk-scale binary task on synthetic 16-dim Gaussian blobs
    "binary-small": dict(
        dataset="synthetic", feature_dim=16, separation=10.0, synthetic_train=2000, synthetic_test=1000,
        n_qubits=4, target_dim=16, n_layers=4, n_clients=10, participation=1.0,
        dirichlet_alpha=0.1, samples_per_client=100, rounds=20, local_lr=0.02, server_lr=0.1,
    ),
}
PRESETS["mnist"] = PRESETS["mnist-paper"]
PRESETS["binary"] = PRESETS["binary-paper"]

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_INT_FIELDS = {
    "feature_dim", "n_classes", "downsample", "test_limit", "synthetic_train", "synthetic_test",
    "target_dim", "n_qubits", "n_layers", "n_clients", "local_epochs", "batch_size",
    "samples_per_client", "rounds", "seed", "threads",
}
_FLOAT_FIELDS = {
    "test_fraction", "separation", "participation", "local_lr", "server_lr", "fisher_threshold",
    "dirichlet_alpha",
}
_BOOL_FIELDS = {"client_retention", "record_timing"}


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _INT_FIELDS:
            if isinstance(value, bool) or float(value) != int(value):
                raise ValueError
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
        if key in _BOOL_FIELDS:
            if isinstance(value, str):
                if value.lower() in ("true", "yes", "on", "1"):
                    return True
                if value.lower() in ("false", "no", "off", "0"):
                    return False
                raise ValueError
            return bool(value)
        if key == "classes":
            return [int(c) for c in (value.split(",") if isinstance(value, str) else value)]
        if key == "strategies":
            items = value.split(",") if isinstance(value, str) else value
            return [str(s).strip() for s in items if str(s).strip()]
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return str(value)


def _apply(config: ExperimentConfig, values: dict, source: str) -> ExperimentConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s) in {source}: {', '.join(unknown)}")
    return replace(config, **{k: _coerce(k, v) for k, v in values.items()})


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key-value mapping at top level")
    return data


def parse_config(path=None, overrides: dict | None = None, preset: str | None = None,
                 check_paths: bool = True) -> ExperimentConfig:
    """Resolve and validate a config from an optional file, preset and overrides.

    ``preset`` may also be given as a ``preset`` key inside the file; the
    explicit argument wins.
    """
    file_values = load_config_file(path) if path else {}
    preset = preset or file_values.pop("preset", None)
    file_values.pop("preset", None)
    config = ExperimentConfig()
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(sorted(PRESETS))}")
        config = _apply(config, PRESETS[preset], f"preset {preset}")
    config = _apply(config, file_values, str(path) if path else "file")
    flag_values = {k: v for k, v in (overrides or {}).items() if v is not None}
    config = _apply(config, flag_values, "flags")
    if config.out_dir is None:
        config = replace(config, out_dir=os.environ.get(OUT_ENV, "runs"))
    validate(config, check_paths=check_paths)
    return config


def validate(config: ExperimentConfig, check_paths: bool = True) -> None:
    c = config
    if c.dataset not in DATASET_KINDS:
        raise ConfigError(f"dataset must be one of {DATASET_KINDS}, got {c.dataset!r}")
    if c.n_qubits < 1 or c.n_layers < 1:
        raise ConfigError("n_qubits and n_layers must be >= 1")
    if c.target_dim != 1 << c.n_qubits:
        raise ConfigError(f"target_dim {c.target_dim} does not equal 2**n_qubits = {1 << c.n_qubits}")
    k = c.task_classes
    if k < 2:
        raise ConfigError("at least two classes are needed")
    if k > 2 and k > c.n_qubits:
        raise ConfigError(f"{k} classes need {k} readout qubits but n_qubits = {c.n_qubits}")
    bad = [s for s in c.strategies if s not in STRATEGIES]
    if bad or not c.strategies:
        raise ConfigError(f"strategies must be a non-empty subset of {STRATEGIES}, got {c.strategies}")
    if c.fisher_mode not in ("sample", "batch"):
        raise ConfigError("fisher_mode must be 'sample' or 'batch'")
    if c.threads < 1:
        raise ConfigError("threads must be >= 1")
    if c.rounds < 1:
        raise ConfigError("rounds must be >= 1")
    if c.samples_per_client < 1:
        raise ConfigError("samples_per_client must be >= 1")
    if c.downsample is not None and c.dataset.startswith("mnist") and c.downsample**2 > c.target_dim:
        raise ConfigError(f"{c.downsample}x{c.downsample} images do not fit target_dim {c.target_dim}")
    if c.dataset in ("csv", "synthetic"):
        if c.feature_dim is None:
            raise ConfigError(f"dataset {c.dataset} needs feature_dim")
        if c.feature_dim > c.target_dim:
            raise ConfigError(f"feature_dim {c.feature_dim} exceeds target_dim {c.target_dim}")
    try:
        for s in c.strategies:
            c.round_config(s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if c.dataset == "mnist":
        required = ("train_images", "train_labels", "test_images", "test_labels")
    elif c.dataset == "csv":
        required = ("train_csv",)
    else:
        required = ()
    for key in required:
        value = getattr(c, key)
        if not value:
            raise ConfigError(f"missing dataset path: {key}")
        if check_paths and not Path(value).exists():
            raise ConfigError(f"missing dataset path: {key} = {value} does not exist")
    if check_paths and c.dataset == "csv" and c.test_csv and not Path(c.test_csv).exists():
        raise ConfigError(f"missing dataset path: test_csv = {c.test_csv} does not exist")
