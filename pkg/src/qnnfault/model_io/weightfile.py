"""Bit-exact ``QNFW`` weight files.

Layout (little-endian)::

    "QNFW" | u32 version | u32 layer_count
    per layer: u8 kind | 4 x u32 extents | u8 bit_width | packed bits (byte padded)

Extents per kind: conv ``(out, in, k, k)``, fc ``(out, in, 1, 1)``, max pool
``(pool, stride, 1, 1)``, activation ``(1, C, H, W)`` of its output buffer.
Only conv and fc layers carry a payload; the input extents are recovered by
walking the chain back from the first layer whose output extents are known.
"""
from __future__ import annotations

import os
import struct

from ..errors import BadMagicError, DataError, QnnFaultError, ShapeChainError, TruncatedPayloadError
from ..qnn.layers import LayerKind, LayerSpec
from ..qnn.network import NetworkModel
from ..qnn.quant import QuantTensor

MAGIC = b"QNFW"
VERSION = 1
_HEADER = struct.Struct("<4sII")
_LAYER = struct.Struct("<B4IB")


def _extents(net: NetworkModel, i: int, spec: LayerSpec):
    if spec.has_weights:
        return spec.weight_dims, spec.weight_bits
    if spec.kind == LayerKind.MAXPOOL2D:
        return (spec.pool_size, spec.stride, 1, 1), 0
    return (1,) + net.shapes[i], spec.activation_bits


def dumps(net: NetworkModel) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(net.layers))]
    for i, spec in enumerate(net.layers):
        ext, bits = _extents(net, i, spec)
        parts.append(_LAYER.pack(int(spec.kind), *ext, bits))
        if spec.has_weights:
            parts.append(net.weights_of(i).tobytes())
    return b"".join(parts)


def save_weights(net: NetworkModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(net))


def _input_shape(layers, act_extents):
    """Walk back from the first activation buffer to the network input."""
    first_known = min(act_extents, default=None)
    if first_known is None:
        spec = layers[0]
        if spec.kind == LayerKind.FULLY_CONNECTED:
            return (spec.in_features, 1, 1)
        raise ShapeChainError("cannot infer input extents without an activation layer")
    shape = act_extents[first_known]
    for spec in reversed(layers[:first_known]):
        c, h, w = shape
        if spec.kind == LayerKind.CONV2D:
            shape = (spec.in_channels, h + spec.kernel_size - 1, w + spec.kernel_size - 1)
        elif spec.kind == LayerKind.MAXPOOL2D:
            shape = (c, h * spec.pool_size, w * spec.pool_size)
        elif spec.kind == LayerKind.FULLY_CONNECTED:
            shape = (spec.in_features, 1, 1)
    return shape


def loads(blob: bytes, name: str = "loaded") -> NetworkModel:
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        raise BadMagicError("not a QNFW weight file (bad magic)")
    _, version, count = _HEADER.unpack_from(blob)
    if version != VERSION:
        raise DataError(f"unsupported QNFW version {version}")
    off = _HEADER.size
    layers, params, act_extents = [], [], {}
    for i in range(count):
        if off + _LAYER.size > len(blob):
            raise TruncatedPayloadError(f"truncated payload in layer {i} header")
        code, e0, e1, e2, e3, bits = _LAYER.unpack_from(blob, off)
        off += _LAYER.size
        try:
            kind = LayerKind(code)
        except ValueError:
            raise DataError(f"unknown layer kind code {code}") from None
        if kind == LayerKind.CONV2D:
            if e2 != e3:
                raise ShapeChainError(f"layer {i}: non-square kernel {e2}x{e3}")
            spec = LayerSpec.conv(e1, e0, e2, bits)
        elif kind == LayerKind.FULLY_CONNECTED:
            spec = LayerSpec.fc(e1, e0, bits)
        elif kind == LayerKind.MAXPOOL2D:
            spec = LayerSpec.maxpool(e0, e1)
        else:
            spec = LayerSpec.act(bits)
            act_extents[i] = (e1, e2, e3)
        if spec.has_weights:
            nbytes = (e0 * e1 * e2 * e3 * bits + 7) // 8
            if off + nbytes > len(blob):
                raise TruncatedPayloadError(f"truncated payload in layer {i} weights")
            try:
                params.append(QuantTensor((e0, e1, e2, e3), bits, blob[off:off + nbytes]))
            except QnnFaultError as exc:
                raise DataError(f"layer {i}: {exc}") from exc
            off += nbytes
        layers.append(spec)
    if off != len(blob):
        raise DataError(f"{len(blob) - off} trailing bytes after last layer")
    try:
        net = NetworkModel(layers, _input_shape(layers, act_extents), params, name)
    except QnnFaultError as exc:
        raise ShapeChainError(str(exc)) from exc
    for i, ext in act_extents.items():
        if net.shapes[i] != ext:
            raise ShapeChainError(f"layer {i}: recorded extents {ext} but chain gives {net.shapes[i]}")
    return net


def load_weights(path) -> NetworkModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    return loads(blob, os.path.splitext(os.path.basename(str(path)))[0])
