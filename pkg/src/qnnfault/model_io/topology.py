"""Network topologies and susceptible-bit accounting."""
from __future__ import annotations

import re

import numpy as np

from ..errors import InvalidValueError
from ..qnn.layers import LayerKind, LayerSpec
from ..qnn.network import NetworkModel
from ..qnn.quant import QUANTIZER_BITS, QuantTensor, quantize_levels

CNV_CONV_CHANNELS = (64, 64, 128, 128, 256, 256)
CNV_FC_FEATURES = (512, 512)
CNV_INPUT = (3, 32, 32)
TOY_INPUT = (3, 8, 8)


def _check_bits(*bits):
    for b in bits:
        if b not in QUANTIZER_BITS:
            raise InvalidValueError(f"unsupported bit width {b}; expected one of {QUANTIZER_BITS}")


def cnv_layers(weight_bits: int, activation_bits: int, width_divisor: int = 1,
               classes: int = 10) -> list[LayerSpec]:
    """CNV layer chain: 6 valid 3x3 convs, 3 max pools, 3 fully-connected layers.

    Spatial extents run 32 -> 30 -> 28 -> 14 -> 12 -> 10 -> 5 -> 3 -> 1. The
    third pool sits on a 1x1 map and therefore uses a 1x1 window.
    """
    _check_bits(weight_bits, activation_bits)
    ch = [max(1, c // width_divisor) for c in CNV_CONV_CHANNELS]
    fc = [max(1, f // width_divisor) for f in CNV_FC_FEATURES]
    conv = lambda i, o: LayerSpec.conv(i, o, 3, weight_bits)
    act = lambda: LayerSpec.act(activation_bits)
    return [
        conv(3, ch[0]), act(), conv(ch[0], ch[1]), act(), LayerSpec.maxpool(2),
        conv(ch[1], ch[2]), act(), conv(ch[2], ch[3]), act(), LayerSpec.maxpool(2),
        conv(ch[3], ch[4]), act(), conv(ch[4], ch[5]), act(), LayerSpec.maxpool(1),
        LayerSpec.fc(ch[5], fc[0], weight_bits), act(),
        LayerSpec.fc(fc[0], fc[1], weight_bits), act(),
        LayerSpec.fc(fc[1], classes, weight_bits),
    ]


def build_cnv(weight_bits: int, activation_bits: int, width_divisor: int = 1,
              rng: np.random.Generator | None = None) -> NetworkModel:
    """CNV replica; ``width_divisor`` shrinks every channel count for desk-scale runs.

    With ``rng`` the weights are randomly initialized, otherwise every code is 0.
    """
    name = f"cnvW{weight_bits}A{activation_bits}"
    if width_divisor != 1:
        name += f"-d{width_divisor}"
    net = NetworkModel(cnv_layers(weight_bits, activation_bits, width_divisor), CNV_INPUT, name=name)
    if rng is not None:
        randomize_weights(net, rng)
    return net


def build_toy(weight_bits: int = 1, activation_bits: int = 1,
              rng: np.random.Generator | None = None) -> NetworkModel:
    """Small conv net on 3x8x8 inputs (5,464 weights)."""
    _check_bits(weight_bits, activation_bits)
    layers = [
        LayerSpec.conv(3, 8, 3, weight_bits), LayerSpec.act(activation_bits), LayerSpec.maxpool(2),
        LayerSpec.fc(72, 64, weight_bits), LayerSpec.act(activation_bits),
        LayerSpec.fc(64, 10, weight_bits),
    ]
    net = NetworkModel(layers, TOY_INPUT, name=f"toyW{weight_bits}A{activation_bits}")
    if rng is not None:
        randomize_weights(net, rng)
    return net


_ARCH = re.compile(r"^(cnv|toy)(?:W([12])A([12]))?(-small)?$")


def build_arch(name: str, rng: np.random.Generator | None = None) -> NetworkModel:
    """Build by name: ``cnvW1A1``, ``cnvW2A2``, ``toy`` (= ``toyW1A1``), ``toyW2A2``.

    A ``-small`` suffix on a cnv name divides all channel counts by 8.
    """
    m = _ARCH.match(name)
    if not m or (m.group(1) == "cnv" and m.group(2) is None):
        raise InvalidValueError(f"unknown architecture {name!r}")
    family, wb, ab, small = m.groups()
    wb, ab = int(wb or 1), int(ab or 1)
    if family == "toy":
        if small:
            raise InvalidValueError(f"unknown architecture {name!r}")
        return build_toy(wb, ab, rng)
    return build_cnv(wb, ab, 8 if small else 1, rng)


def arch_image_shape(name: str) -> tuple[int, int, int]:
    return TOY_INPUT if name.startswith("toy") else CNV_INPUT


def randomize_weights(net: NetworkModel, rng: np.random.Generator) -> None:
    for j, p in enumerate(net.params):
        levels = quantize_levels(rng.normal(0.0, 0.5, p.dims), p.bit_width)
        net.params[j] = QuantTensor.from_values(levels, p.bit_width, p.dims)


def count_susceptible_bits(net: NetworkModel, domain: str = "weight") -> int:
    """Stored bits exposed to upsets in the weight or activation buffers."""
    if domain == "weight":
        return sum(p.nbits for p in net.params)
    if domain == "activation":
        return sum(m.nbits for m in net.activation_masks)
    raise InvalidValueError(f"unknown fault domain {domain!r}")


def numbered_layers(net: NetworkModel) -> list[int]:
    """Layer-list indices of the weighted layers, numbered 1.. in forward order."""
    return list(net.param_layers)


def activation_after(net: NetworkModel, layer_index: int) -> int | None:
    """Index of the activation layer fed by weighted layer ``layer_index``, if any."""
    for i in range(layer_index + 1, len(net.layers)):
        kind = net.layers[i].kind
        if kind == LayerKind.QUANT_ACTIVATION:
            return i
        if kind in (LayerKind.CONV2D, LayerKind.FULLY_CONNECTED):
            return None
    return None
