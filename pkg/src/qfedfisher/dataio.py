"""Dataset loading and preparation for amplitude encoding.

Formats
-------
IDX (MNIST): big-endian ``uint32`` magic (0x00000803 images, 0x00000801
labels), one ``uint32`` per dimension, then raw ``uint8`` data.  Files ending
in ``.gz`` are decompressed transparently.

CSV: comma separated, optional single header line, ``feature_dim`` decimal
floats followed by an integer label in the last column.
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n_samples, feature_dim)
    labels: np.ndarray  # (n_samples,) in [0, n_classes)
    n_classes: int
    split: str = "train"

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, features=self.features[idx], labels=self.labels[idx])


def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, path) -> tuple[tuple[int, ...], np.ndarray]:
    if len(raw) < 8:
        raise DatasetError(f"{path}: truncated IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise DatasetError(
            f"{path}: bad magic number 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DatasetError(f"{path}: truncated IDX header ({len(raw)} bytes)")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header < size:
        raise DatasetError(f"{path}: truncated data, expected {size} bytes after offset {header}, got {len(raw) - header}")
    return dims, np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx_images(path, images) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    data = struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + images.tobytes()
    _write(path, data)


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    _write(path, struct.pack(">II", LABELS_MAGIC, labels.size) + labels.tobytes())


def _write(path, data: bytes) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        data = gzip.compress(data, mtime=0)
    path.write_bytes(data)


def load_mnist_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    dims, images = _parse_idx(_read_bytes(images_path), IMAGES_MAGIC, images_path)
    (n_labels,), labels = _parse_idx(_read_bytes(labels_path), LABELS_MAGIC, labels_path)
    if dims[0] != n_labels:
        raise DatasetError(f"{images_path} holds {dims[0]} images but {labels_path} holds {n_labels} labels")
    if labels.size and labels.max() > 9:
        raise DatasetError(f"{labels_path}: label {labels.max()} outside 0-9")
    features = images.reshape(dims[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), 10, split)


def bundled_mnist_paths(split: str) -> tuple[Path, Path]:
    """Paths of the packaged MNIST digits 0-3 subset (``split`` is train or test)."""
    if split not in ("train", "test"):
        raise ValueError("split must be 'train' or 'test'")
    root = resources.files("qfedfisher") / "data"
    return (
        Path(str(root / f"mnist0123-{split}-images-idx3-ubyte.gz")),
        Path(str(root / f"mnist0123-{split}-labels-idx1-ubyte.gz")),
    )


def load_bundled_mnist(split: str) -> Dataset:
    return load_mnist_idx(*bundled_mnist_paths(split), split=split)


def select_classes(dataset: Dataset, classes) -> Dataset:
    """Keep only ``classes`` and relabel them 0..len(classes)-1 in the given order."""
    classes = [int(c) for c in classes]
    lookup = np.full(max(max(classes), int(dataset.labels.max())) + 1, -1)
    lookup[classes] = np.arange(len(classes))
    new = lookup[dataset.labels]
    keep = np.flatnonzero(new >= 0)
    return Dataset(dataset.features[keep], new[keep], len(classes), dataset.split)


def downsample_images(dataset: Dataset, side: int, source_side: int | None = None) -> Dataset:
    """Average-pool square images to ``side`` x ``side``.

    The source is centre-cropped to the largest multiple of ``side`` first
    (28 -> 24 -> 8 for MNIST, discarding the blank two-pixel border).
    """
    src = source_side or int(round(np.sqrt(dataset.feature_dim)))
    if src * src != dataset.feature_dim or side > src:
        raise DatasetError(f"cannot downsample {dataset.feature_dim} features to {side}x{side}")
    block = src // side
    crop = (src - block * side) // 2
    imgs = dataset.features.reshape(-1, src, src)[:, crop : crop + block * side, crop : crop + block * side]
    pooled = imgs.reshape(-1, side, block, side, block).mean(axis=(2, 4))
    return replace(dataset, features=pooled.reshape(-1, side * side))


def prepare_for_encoding(dataset: Dataset, target_dim: int) -> Dataset:
    """Zero-pad every row to ``target_dim`` and scale it to unit L2 norm."""
    if target_dim < 2 or target_dim & (target_dim - 1):
        raise DatasetError(f"target_dim {target_dim} is not a power of two")
    n, dim = dataset.features.shape
    if dim > target_dim:
        raise DatasetError(f"feature_dim {dim} exceeds target_dim {target_dim}")
    padded = np.zeros((n, target_dim))
    padded[:, :dim] = dataset.features
    norms = np.linalg.norm(padded, axis=1)
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise DatasetError(f"{bad.size} all-zero feature rows (first at row {bad[0]}) cannot be encoded")
    return replace(dataset, features=padded / norms[:, None])


def load_feature_csv(path, feature_dim: int, n_classes: int, split: str = "train") -> Dataset:
    path = Path(path)
    rows, labels = [], []
    with path.open(newline="") as f:
        for lineno, record in enumerate(csv.reader(f), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if lineno == 1 and not _numeric(record[0]):
                continue  # header
            if len(record) != feature_dim + 1:
                raise DatasetError(
                    f"{path}:{lineno}: expected {feature_dim} features and a label, got {len(record)} columns"
                )
            try:
                values = [float(cell) for cell in record[:-1]]
                label = int(record[-1])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric cell") from None
            if not 0 <= label < n_classes:
                raise DatasetError(f"{path}:{lineno}: label {label} outside [0, {n_classes})")
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels, dtype=np.int64), n_classes, split)


def _numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def save_feature_csv(path, dataset: Dataset, header: bool = True) -> None:
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        if header:
            writer.writerow([f"f{i}" for i in range(dataset.feature_dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def synthesize_binary(n_samples: int, feature_dim: int, class_separation: float, seed: int,
                      split: str = "train") -> Dataset:
    """Two unit-variance Gaussian blobs whose means are ``class_separation`` apart.

    The means are ``c +/- (s/2) u`` with ``u`` a random unit direction and
    ``c = (s/2) v`` for a unit ``v`` orthogonal to ``u``.  The offset keeps the
    two classes apart in direction, which is all amplitude encoding retains.
    Labels alternate 0/1 before shuffling, so classes are balanced.
    """
    if feature_dim < 2 or feature_dim & (feature_dim - 1):
        raise DatasetError(f"feature_dim {feature_dim} is not a power of two")
    if class_separation < 0:
        raise DatasetError("class_separation must be >= 0")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(feature_dim, 2)))
    u, v = basis[:, 0], basis[:, 1]
    half = class_separation / 2.0
    labels = rng.permutation(np.arange(n_samples) % 2)
    means = half * v + np.where(labels[:, None] == 0, half, -half) * u
    features = means + rng.normal(size=(n_samples, feature_dim))
    return Dataset(features, labels.astype(np.int64), 2, split)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint random split by index."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_test = max(1, int(round(test_fraction * len(dataset))))
    test, train = np.sort(order[:n_test]), np.sort(order[n_test:])
    return replace(dataset.subset(train), split="train"), replace(dataset.subset(test), split="test")
