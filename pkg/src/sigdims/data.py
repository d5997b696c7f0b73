"""Datasets: the classic 3073-byte binary image format plus synthetic desk data.

Records are 1 label byte followed by 3072 pixel bytes (R, G, B planes,
row-major 32x32).  Pixels are scaled to [0, 1] then normalized per channel
with constants that live in the run config, not here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

RECORD_BYTES = 3073
IMAGE_SIDE = 32
DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.25, 0.25, 0.25)


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float64
    labels: np.ndarray  # (N,) int64

    def __len__(self) -> int:
        return self.images.shape[0]

    def take(self, k: int) -> "Dataset":
        return Dataset(self.images[:k], self.labels[:k])


def load_cifar_binary(
    path,
    subset: int | None = None,
    mean=DEFAULT_MEAN,
    std=DEFAULT_STD,
    classes: int = 10,
) -> Dataset:
    """Load a binary record file; optionally only the first `subset` records."""
    raw = np.fromfile(str(path), dtype=np.uint8)
    if raw.size % RECORD_BYTES != 0:
        offset = (raw.size // RECORD_BYTES) * RECORD_BYTES
        raise FormatError(
            f"{path}: size {raw.size} is not a multiple of {RECORD_BYTES} "
            f"(truncated record at byte offset {offset})"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    if subset is not None:
        records = records[:subset]
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise DataError(
            f"{path}: record {bad} has label {labels[bad]}, expected < {classes}"
        )
    planes = records[:, 1:].reshape(-1, 3, IMAGE_SIDE, IMAGE_SIDE)
    images = planes.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
    images = (images - np.asarray(mean)) / np.asarray(std)
    return Dataset(images=images, labels=labels)


def write_cifar_binary(path, images_u8: np.ndarray, labels: np.ndarray) -> None:
    """Write (N, 32, 32, 3) uint8 images + labels in the 3073-byte format."""
    n = images_u8.shape[0]
    planes = images_u8.transpose(0, 3, 1, 2).reshape(n, 3 * IMAGE_SIDE * IMAGE_SIDE)
    records = np.concatenate(
        [np.asarray(labels, dtype=np.uint8).reshape(n, 1), planes], axis=1
    )
    Path(path).write_bytes(records.tobytes())


def synthetic_tenclass(
    n: int, seed: int, classes: int = 10, class_seed: int = 7777
) -> tuple[np.ndarray, np.ndarray]:
    """Procedural 10-class 32x32 RGB image set with low intrinsic dimensionality.

    Each class is a smooth template (orthogonalized low-resolution patterns,
    upsampled); samples add a random circular shift and pixel noise.  The
    templates depend only on `class_seed`, so several files drawn with
    different `seed`s (train/test splits) share the same classes.  Returns
    uint8 images and labels, ready for `write_cifar_binary`.
    """
    side = IMAGE_SIDE
    trng = np.random.default_rng(class_seed)
    flat = trng.normal(size=(4 * 4 * 3, classes))
    q, _ = np.linalg.qr(flat)
    low = q.T.reshape(classes, 4, 4, 3)
    templates = []
    for t in low:
        up = np.kron(t, np.ones((side // 4, side // 4, 1)))
        up = (up - up.min()) / (up.max() - up.min() + 1e-12)
        templates.append(up)
    templates = np.stack(templates)

    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, size=n)
    images = templates[labels].copy()
    shifts = rng.integers(-3, 4, size=(n, 2))
    for i in range(n):
        images[i] = np.roll(images[i], tuple(shifts[i]), axis=(0, 1))
    images += rng.normal(0.0, 0.08, size=images.shape)
    images = np.clip(images, 0.0, 1.0)
    return (images * 255.0).round().astype(np.uint8), labels.astype(np.uint8)


def write_synthetic_cifar(
    path, n: int, seed: int, classes: int = 10, class_seed: int = 7777
) -> None:
    images, labels = synthetic_tenclass(n, seed, classes, class_seed)
    write_cifar_binary(path, images, labels)
