"""CIFAR-10 binary batches and a synthetic stand-in dataset."""
from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..qnn.data import Dataset

CIFAR_RECORD = 3073


def load_cifar10(path, limit: int | None = None) -> Dataset:
    """Read a CIFAR-10 binary batch (label byte + 3x32x32 planar pixels per record)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise DataError(f"{path}: length {raw.size} is not a multiple of {CIFAR_RECORD}")
    records = raw.reshape(-1, CIFAR_RECORD)
    if limit is not None:
        records = records[:limit]
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise DataError(f"{path}: label byte {labels.max()} > 9")
    images = records[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 127.5 - 1.0
    return Dataset(images, labels, source="cifar10", class_count=10)


def _prototypes(class_count: int, image_shape: tuple[int, int, int]) -> np.ndarray:
    # fixed across seeds so that independently drawn splits share class structure
    c, h, w = image_shape
    prng = np.random.default_rng(0x5EED)
    yy, xx = np.mgrid[0:h, 0:w]
    width = max(h, w) / 5.0
    protos = np.empty((class_count,) + tuple(image_shape))
    for k in range(class_count):
        cy, cx = prng.uniform(0, h - 1), prng.uniform(0, w - 1)
        colour = prng.choice([-1.0, 1.0], size=c)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width ** 2))
        protos[k] = colour[:, None, None] * blob
    return protos


def synth_dataset(n: int, class_count: int = 10, rng: np.random.Generator | None = None,
                  image_shape: tuple[int, int, int] = (3, 8, 8), noise: float = 0.15) -> Dataset:
    """Balanced class-conditional Gaussian blobs rendered as images in [-1, 1]."""
    if n <= 0:
        raise DataError("synthetic dataset needs n > 0")
    rng = np.random.default_rng(0) if rng is None else rng
    labels = rng.permutation(np.arange(n) % class_count)
    protos = _prototypes(class_count, image_shape)
    images = protos[labels] + rng.normal(0.0, noise, (n,) + tuple(image_shape))
    return Dataset(np.clip(images, -1.0, 1.0), labels, source="synthetic", class_count=class_count)
