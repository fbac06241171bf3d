"""Layer descriptions and the integer forward kernels.

Kernels work on batched float64 arrays of shape ``(N, C, H, W)`` holding
integer values. Every product and partial sum stays an integer far below
2**53, so the BLAS-backed float64 matmul is exact and the results are
identical to a wide-integer accumulator regardless of summation order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidValueError, ShapeError
from .quant import QUANTIZER_BITS, QuantTensor, decode, encode, quantize_levels

# caps the im2col scratch buffer at roughly 64 MiB of float64
_IM2COL_BUDGET = 8 * 1024 * 1024


class LayerKind(enum.IntEnum):
    CONV2D = 1
    MAXPOOL2D = 2
    FULLY_CONNECTED = 3
    QUANT_ACTIVATION = 4


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    pool_size: int = 0
    stride: int = 1
    in_features: int = 0
    out_features: int = 0
    weight_bits: int = 0
    activation_bits: int = 0

    @classmethod
    def conv(cls, in_channels, out_channels, kernel_size=3, weight_bits=1):
        return cls(LayerKind.CONV2D, in_channels=in_channels, out_channels=out_channels,
                   kernel_size=kernel_size, weight_bits=weight_bits)

    @classmethod
    def maxpool(cls, pool_size=2, stride=None):
        return cls(LayerKind.MAXPOOL2D, pool_size=pool_size,
                   stride=pool_size if stride is None else stride)

    @classmethod
    def fc(cls, in_features, out_features, weight_bits=1):
        return cls(LayerKind.FULLY_CONNECTED, in_features=in_features,
                   out_features=out_features, weight_bits=weight_bits)

    @classmethod
    def act(cls, activation_bits=1):
        return cls(LayerKind.QUANT_ACTIVATION, activation_bits=activation_bits)

    @property
    def has_weights(self) -> bool:
        return self.kind in (LayerKind.CONV2D, LayerKind.FULLY_CONNECTED)

    @property
    def weight_dims(self) -> tuple[int, int, int, int]:
        if self.kind == LayerKind.CONV2D:
            return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)
        if self.kind == LayerKind.FULLY_CONNECTED:
            return (self.out_features, self.in_features, 1, 1)
        raise ShapeError(f"{self.kind.name} has no weights")

    @property
    def fan_in(self) -> int:
        if self.kind == LayerKind.CONV2D:
            return self.in_channels * self.kernel_size ** 2
        if self.kind == LayerKind.FULLY_CONNECTED:
            return self.in_features
        raise ShapeError(f"{self.kind.name} has no fan-in")

    def output_shape(self, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
        """Per-image ``(C, H, W)`` output extents; raises on inconsistent input."""
        c, h, w = in_shape
        if self.kind == LayerKind.CONV2D:
            k = self.kernel_size
            if c != self.in_channels:
                raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
            if h < k or w < k:
                raise ShapeError(f"input {h}x{w} smaller than {k}x{k} kernel")
            return (self.out_channels, h - k + 1, w - k + 1)
        if self.kind == LayerKind.MAXPOOL2D:
            p, s = self.pool_size, self.stride
            if p != s:
                raise ShapeError("only non-overlapping pooling (stride == pool size) is supported")
            if h % p or w % p:
                raise ShapeError(f"extents {h}x{w} not divisible by pool size {p}")
            return (c, h // p, w // p)
        if self.kind == LayerKind.FULLY_CONNECTED:
            if c * h * w != self.in_features:
                raise ShapeError(f"fc expects {self.in_features} inputs, got {c * h * w}")
            return (self.out_features, 1, 1)
        return in_shape


def _as_batch(x) -> np.ndarray:
    if isinstance(x, QuantTensor):
        x = x.values
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"expected (N, C, H, W) input, got shape {x.shape}")
    return x


def _weight_matrix(weights, spec: LayerSpec) -> np.ndarray:
    dims = spec.weight_dims
    if isinstance(weights, QuantTensor):
        if weights.dims != dims:
            raise ShapeError(f"weights {weights.dims} do not match layer {dims}")
        flat = weights.as_float()
    else:
        flat = np.asarray(weights, dtype=np.float64)
        if flat.size != np.prod(dims):
            raise ShapeError(f"weights of size {flat.size} do not match layer {dims}")
    return flat.reshape(dims[0], -1)


def conv2d_batch(x: np.ndarray, wmat: np.ndarray, k: int) -> np.ndarray:
    """Valid, stride-1 cross-correlation of ``x`` with ``wmat`` (out, C*k*k)."""
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    out = np.empty((n, wmat.shape[0], ho, wo))
    chunk = max(1, _IM2COL_BUDGET // max(1, ho * wo * c * k * k))
    for i in range(0, n, chunk):
        win = sliding_window_view(x[i:i + chunk], (k, k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, c * k * k)
        res = cols @ wmat.T
        out[i:i + chunk] = res.reshape(-1, ho, wo, wmat.shape[0]).transpose(0, 3, 1, 2)
    return out


def maxpool_batch(x: np.ndarray, p: int) -> np.ndarray:
    n, c, h, w = x.shape
    if p == 1:
        return x
    return x.reshape(n, c, h // p, p, w // p, p).max(axis=(3, 5))


def conv2d_forward(input, weights, spec: LayerSpec) -> np.ndarray:
    x = _as_batch(input)
    spec.output_shape(x.shape[1:])
    return conv2d_batch(x, _weight_matrix(weights, spec), spec.kernel_size)


def maxpool2d(input, spec: LayerSpec):
    """Windowed max; a :class:`QuantTensor` input yields a QuantTensor of the same width."""
    x = _as_batch(input)
    spec.output_shape(x.shape[1:])
    out = maxpool_batch(x, spec.pool_size)
    if isinstance(input, QuantTensor):
        return QuantTensor.from_values(out.astype(np.int64), input.bit_width, out.shape)
    return out


def fully_connected_forward(input, weights, spec: LayerSpec) -> np.ndarray:
    x = _as_batch(input)
    spec.output_shape(x.shape[1:])
    flat = x.reshape(x.shape[0], -1)
    return flat @ _weight_matrix(weights, spec).T


def activate_batch(pre_act: np.ndarray, bit_width: int, mask_codes: np.ndarray | None = None,
                   scale: float = 1.0) -> np.ndarray:
    """Quantize scaled pre-activations and XOR their codes with a per-element mask."""
    levels = quantize_levels(pre_act * scale, bit_width)
    if mask_codes is not None:
        m = mask_codes.reshape(levels.shape[1:])
        if bit_width == 1:
            levels = levels * (1 - 2 * m.astype(np.int8))
        else:
            levels = decode(encode(levels, bit_width) ^ m, bit_width)
    return levels.astype(np.float64)


def quant_activation(pre_act, bit_width: int, mask: QuantTensor | None = None,
                     scale: float = 1.0) -> QuantTensor:
    """Quantize one activation buffer, then XOR its packed bits with ``mask``."""
    if bit_width not in QUANTIZER_BITS:
        raise InvalidValueError(f"unsupported activation bit width {bit_width}")
    x = np.asarray(pre_act, dtype=np.float64)
    codes = None
    if mask is not None:
        if mask.size != x.size or mask.bit_width != bit_width:
            raise ShapeError(f"mask of {mask.nbits} bits does not match {x.size} x {bit_width}-bit buffer")
        codes = mask.codes if mask.any_set() else None
    levels = activate_batch(x.reshape((1,) + x.shape), bit_width,
                            None if codes is None else codes.reshape(x.shape), scale)
    return QuantTensor.from_values(levels[0].astype(np.int64), bit_width, x.shape)
