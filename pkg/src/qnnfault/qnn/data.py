from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class TrainingSample:
    image: np.ndarray  # (C, H, W), values in [-1, 1]
    label: int


@dataclass
class Dataset:
    """Images stacked as ``(N, C, H, W)`` float64 with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    source: str = "synthetic"
    class_count: int = 10

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise DataError(f"images {self.images.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return self.labels.shape[0]

    def __getitem__(self, i) -> TrainingSample:
        return TrainingSample(self.images[i], int(self.labels[i]))

    def subset(self, stop: int, start: int = 0) -> Dataset:
        return Dataset(self.images[start:stop], self.labels[start:stop], self.source, self.class_count)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])
