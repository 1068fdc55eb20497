"""MNIST ingestion from IDX files and per-class subset assembly.

The IDX format is big-endian: a 4-byte magic, 4-byte counts/dimensions,
then raw unsigned bytes.  Images must be 28x28 and are flattened row-major
to 784-vectors scaled to [0, 1].
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from ..resnet import LabeledSet
from ..trainer import derive_seed

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SIDE = 28


@dataclass(frozen=True)
class MnistSet:
    images: np.ndarray  # (N, 784) floats in [0, 1]
    labels: np.ndarray  # (N,) integers 0..9

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataFormatError("image and label counts differ")

    def __len__(self):
        return len(self.images)

    def subset(self, idx):
        return MnistSet(self.images[idx], self.labels[idx])


def _read_bytes(path):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _parse_header(raw, path, expected_magic, n_dim_fields):
    header_len = 4 * (1 + n_dim_fields)
    if len(raw) < header_len:
        raise DataFormatError(f"{path}: truncated before header end")
    fields = struct.unpack(f">{1 + n_dim_fields}I", raw[:header_len])
    if fields[0] != expected_magic:
        raise DataFormatError(
            f"{path}: magic 0x{fields[0]:08x}, expected 0x{expected_magic:08x}"
        )
    return fields[1:], raw[header_len:]


def mnist_load(images_path, labels_path) -> MnistSet:
    """Parse an IDX image/label file pair (plain or gzipped)."""
    (n_img, rows, cols), img_body = _parse_header(
        _read_bytes(images_path), images_path, IMAGES_MAGIC, 3
    )
    if (rows, cols) != (SIDE, SIDE):
        raise DataFormatError(
            f"{images_path}: image dimensions {rows}x{cols}, expected 28x28"
        )
    if len(img_body) != n_img * rows * cols:
        raise DataFormatError(
            f"{images_path}: {len(img_body)} pixel bytes for {n_img} images"
        )
    (n_lab,), lab_body = _parse_header(
        _read_bytes(labels_path), labels_path, LABELS_MAGIC, 1
    )
    if len(lab_body) != n_lab:
        raise DataFormatError(f"{labels_path}: {len(lab_body)} bytes for {n_lab} labels")
    if n_img != n_lab:
        raise DataFormatError(
            f"count mismatch: {n_img} images but {n_lab} labels"
        )
    images = (
        np.frombuffer(img_body, dtype=np.uint8)
        .reshape(n_img, rows * cols)
        .astype(float)
        / 255.0
    )
    labels = np.frombuffer(lab_body, dtype=np.uint8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{labels_path}: label values exceed 9")
    return MnistSet(images, labels)


def mnist_split(data: MnistSet, seed: int, sizes=(50_000, 10_000, 10_000)):
    """Seeded shuffle into train / validation / test pools."""
    if sum(sizes) > len(data):
        raise DataFormatError(
            f"cannot split {len(data)} samples into pools of {sizes}"
        )
    perm = np.random.default_rng(int(seed)).permutation(len(data))
    a, b = sizes[0], sizes[0] + sizes[1]
    return (
        data.subset(perm[:a]),
        data.subset(perm[a:b]),
        data.subset(perm[b : b + sizes[2]]),
    )


def _binary_set(pool: MnistSet, digit: int, per_side: int, rng) -> LabeledSet:
    pos = np.flatnonzero(pool.labels == digit)
    neg = np.flatnonzero(pool.labels != digit)
    n = min(per_side, len(pos))
    pos = rng.choice(pos, size=n, replace=False)
    neg = rng.choice(neg, size=n, replace=False)
    idx = np.concatenate([pos, neg])
    targets = np.concatenate([np.ones(n), np.zeros(n)])[:, None]
    return LabeledSet(pool.images[idx], targets)


def class_subsets(
    train_pool: MnistSet,
    val_pool: MnistSet,
    digits=range(10),
    seed: int = 0,
    per_class_train: int = 5000,
    per_class_val: int = 1000,
):
    """Per-digit binary training/validation sets (target 1 vs 0).

    Each digit's subset pairs its positives with an equal number of seeded
    random negatives; draws use per-digit derived seeds so adding a digit
    later leaves existing subsets untouched.
    """
    out = {}
    for digit in digits:
        rng = np.random.default_rng(derive_seed(seed, digit))
        out[digit] = (
            _binary_set(train_pool, digit, per_class_train, rng),
            _binary_set(val_pool, digit, per_class_val, rng),
        )
    return out
