"""Greedy bit search maximizing the loss increase under a flip budget."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, InvalidValueError
from ..qnn.data import Dataset
from ..qnn.network import NetworkModel, mean_loss
from .address import build_address_space, flip_bit

EXHAUSTIVE_LIMIT = 8192


@dataclass(frozen=True)
class AttackBudget:
    max_flips: int

    def __post_init__(self):
        if self.max_flips < 1:
            raise InvalidValueError("attack budget must allow at least one flip")


@dataclass
class AttackResult:
    flips: list = field(default_factory=list)
    loss_trace: list = field(default_factory=list)
    net: NetworkModel | None = None


class _LossProbe:
    """Loss evaluation that reuses cached activations below the modified layer."""

    def __init__(self, net: NetworkModel, images: np.ndarray, labels: np.ndarray):
        self.net, self.images, self.labels = net, images, labels
        self.refresh()

    def refresh(self):
        self.inputs = [self.images]
        x = self.images
        for i in range(len(self.net.layers)):
            x = self.net.forward(x, i, i + 1)
            self.inputs.append(x)

    def loss_from(self, layer_index: int) -> float:
        scores = self.net.forward(self.inputs[layer_index], start=layer_index)
        return mean_loss(scores.reshape(len(self.labels), -1) * self.net.score_scale, self.labels)


def bit_search_attack(net: NetworkModel, dataset: Dataset, budget: AttackBudget | int,
                      rng: np.random.Generator | None = None, sample_size: int = 64,
                      candidates: int = 4096) -> AttackResult:
    """Flip weight bits one at a time, each time taking the flip with the largest loss gain.

    Networks with at most 8192 weight bits are searched exhaustively at every
    step. Larger ones are probed with ``candidates`` random bits plus the
    neighbours of bits already flipped. Loss is measured on a fixed sample of
    ``sample_size`` images. Stops early once no candidate raises the loss.
    The input network is left untouched; the attacked copy is returned.
    """
    if not isinstance(budget, AttackBudget):
        budget = AttackBudget(int(budget))
    if len(dataset) == 0:
        raise DataError("attack needs a non-empty dataset")
    rng = np.random.default_rng(0) if rng is None else rng
    net = net.copy()
    space = build_address_space(net, "weight")
    if len(dataset) > sample_size:
        idx = np.sort(rng.choice(len(dataset), sample_size, replace=False))
    else:
        idx = np.arange(len(dataset))
    probe = _LossProbe(net, dataset.images[idx], dataset.labels[idx])
    current = probe.loss_from(len(net.layers))
    result = AttackResult(loss_trace=[current], net=net)
    flipped = set()
    for _ in range(budget.max_flips):
        if space.size <= EXHAUSTIVE_LIMIT:
            cand = np.arange(space.size)
        else:
            extra = [b + d for b in flipped for d in (-1, 1)]
            cand = np.unique(np.concatenate([rng.integers(0, space.size, candidates),
                                             np.array(extra, dtype=np.int64)]))
            cand = cand[(cand >= 0) & (cand < space.size)]
        best_bit, best_loss = None, current
        for bit in cand:
            bit = int(bit)
            if bit in flipped:
                continue
            seg, _ = space.locate(bit)
            flip_bit(net, space, bit)
            value = probe.loss_from(space.layer_indices[seg])
            flip_bit(net, space, bit)
            if value > best_loss:
                best_bit, best_loss = bit, value
        if best_bit is None:
            break
        flip_bit(net, space, best_bit)
        flipped.add(best_bit)
        probe.refresh()
        current = best_loss
        result.flips.append(best_bit)
        result.loss_trace.append(current)
    return result
