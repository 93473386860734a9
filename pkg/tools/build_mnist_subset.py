"""Regenerate the bundled MNIST digits 0-3 subset from the official IDX files.

    python tools/build_mnist_subset.py /path/to/mnist-dir

Keeps the first 1500 training and the first 250 test images of each digit in
file order and writes gzipped IDX pairs into src/qfedfisher/data/.
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np

DIGITS = (0, 1, 2, 3)
PER_CLASS = {"train": 1500, "t10k": 250}
OUT = Path(__file__).resolve().parents[1] / "src" / "qfedfisher" / "data"


def _read(path, header):
    raw = Path(path).read_bytes()
    dims = struct.unpack(">" + "I" * header, raw[: 4 * header])
    return dims, np.frombuffer(raw, dtype=np.uint8, offset=4 * header)


def main(src):
    src = Path(src)
    for split, quota in PER_CLASS.items():
        (_, n, rows, cols), images = _read(src / f"{split}-images-idx3-ubyte", 4)
        (_, _), labels = _read(src / f"{split}-labels-idx1-ubyte", 2)
        images = images.reshape(n, rows * cols)
        keep = np.sort(np.concatenate([np.flatnonzero(labels == d)[:quota] for d in DIGITS]))
        img_hdr = struct.pack(">IIII", 0x803, len(keep), rows, cols)
        lab_hdr = struct.pack(">II", 0x801, len(keep))
        name = "train" if split == "train" else "test"
        with gzip.GzipFile(OUT / f"mnist0123-{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(img_hdr + images[keep].tobytes())
        with gzip.GzipFile(OUT / f"mnist0123-{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(lab_hdr + labels[keep].tobytes())
        print(name, len(keep))


if __name__ == "__main__":
    main(sys.argv[1])
