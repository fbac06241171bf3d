"""Flat bit address spaces over weight storage and activation buffers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidValueError
from ..model_io.topology import activation_after
from ..qnn.network import NetworkModel
from ..qnn.quant import QuantTensor

DOMAINS = ("weight", "activation")
MBU_WIDTH = 8


@dataclass(frozen=True)
class BitAddressSpace:
    """Contiguous concatenation of tensor bit ranges, in forward layer order.

    ``tensors[j]`` indexes ``net.params`` (weight domain) or
    ``net.activation_masks`` (activation domain); ``starts[j]`` is the global
    index of that tensor's bit 0 and ``starts[-1] == size``.
    """

    domain: str
    layer: int  # 0 = whole network, otherwise 1-based weighted-layer number
    tensors: tuple[int, ...]
    layer_indices: tuple[int, ...]
    starts: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.starts[-1]

    def locate(self, bit: int) -> tuple[int, int]:
        """(segment, bit offset inside that segment's tensor) of a global bit index."""
        if not 0 <= bit < self.size:
            raise IndexError(f"bit {bit} outside address space of {self.size} bits")
        seg = int(np.searchsorted(self.starts, bit, side="right")) - 1
        return seg, bit - self.starts[seg]

    def split(self, start: int, stop: int):
        """Yield ``(segment, lo, hi)`` tensor-local ranges covering global ``[start, stop)``."""
        seg, lo = self.locate(start)
        while start < stop:
            seg_end = self.starts[seg + 1]
            hi = min(stop, seg_end)
            yield seg, lo, lo + (hi - start)
            start, seg, lo = hi, seg + 1, 0

    def tensor(self, net: NetworkModel, seg: int) -> QuantTensor:
        pool = net.params if self.domain == "weight" else net.activation_masks
        return pool[self.tensors[seg]]


def build_address_space(net: NetworkModel, domain: str = "weight", layer: int = 0) -> BitAddressSpace:
    """Address space over a whole domain (``layer=0``) or one numbered layer.

    Weighted layers are numbered 1.. in forward order (conv1..conv6, fc1..fc3
    on CNV); pooling layers carry no susceptible bits and are not numbered.
    A layer's activation space is the buffer of the activation it feeds.
    """
    if domain not in DOMAINS:
        raise InvalidValueError(f"unknown fault domain {domain!r}")
    n_weighted = len(net.param_layers)
    if layer:
        if not 1 <= layer <= n_weighted:
            raise InvalidValueError(f"layer {layer} outside 1..{n_weighted}")
        li = net.param_layers[layer - 1]
        if domain == "weight":
            tensors, lidx = [layer - 1], [li]
        else:
            ai = activation_after(net, li)
            if ai is None:
                raise InvalidValueError(f"layer {layer} has no activation buffer")
            tensors, lidx = [net.act_layers.index(ai)], [ai]
    elif domain == "weight":
        tensors, lidx = list(range(n_weighted)), list(net.param_layers)
    else:
        tensors, lidx = list(range(len(net.act_layers))), list(net.act_layers)
    pool = net.params if domain == "weight" else net.activation_masks
    starts = np.concatenate([[0], np.cumsum([pool[t].nbits for t in tensors])]).astype(int)
    return BitAddressSpace(domain, layer, tuple(tensors), tuple(lidx), tuple(int(s) for s in starts))


def flip_range(net: NetworkModel, space: BitAddressSpace, start: int, stop: int) -> None:
    for seg, lo, hi in space.split(start, stop):
        space.tensor(net, seg).xor_bits(lo, hi)


def flip_bit(net: NetworkModel, space: BitAddressSpace, bit_index: int) -> NetworkModel:
    """XOR one stored bit in place (a single-event upset); returns ``net``."""
    if not 0 <= bit_index < space.size:
        raise IndexError(f"bit {bit_index} outside address space of {space.size} bits")
    flip_range(net, space, bit_index, bit_index + 1)
    return net


def inject_mbu(net: NetworkModel, space: BitAddressSpace, start_bit: int,
               width: int = MBU_WIDTH) -> NetworkModel:
    """XOR a burst of ``width`` consecutive bits, truncated at the end of the space."""
    if not 0 <= start_bit < space.size:
        raise IndexError(f"start bit {start_bit} outside address space of {space.size} bits")
    flip_range(net, space, start_bit, min(start_bit + width, space.size))
    return net
