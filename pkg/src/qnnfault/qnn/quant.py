"""Packed low-bit tensors and the weight/activation quantizers.

Storage layout: element ``i`` of a tensor with bit width ``b`` occupies bits
``[i*b, (i+1)*b)`` of a flat little-endian bit stream (bit ``k`` lives in
byte ``k // 8`` at position ``k % 8``), code LSB first. Trailing pad bits of
the last byte are always zero.

Codes are two's complement for ``b >= 2``. A 1-bit code is a bare sign bit:
0 decodes to +1 and 1 decodes to -1, so binarized values keep the same
"MSB set means negative" reading as the wider formats.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import InvalidValueError, ShapeError

SUPPORTED_STORAGE_BITS = tuple(range(1, 9))
QUANTIZER_BITS = (1, 2)


def value_range(bit_width: int) -> tuple[int, int]:
    """Smallest and largest decodable value for a bit width."""
    if bit_width == 1:
        return -1, 1
    return -(1 << (bit_width - 1)), (1 << (bit_width - 1)) - 1


def encode(values: np.ndarray, bit_width: int) -> np.ndarray:
    """Map signed integer values onto unsigned ``bit_width``-bit codes."""
    v = np.asarray(values, dtype=np.int64)
    lo, hi = value_range(bit_width)
    if v.size and (v.min() < lo or v.max() > hi):
        raise InvalidValueError(f"value outside [{lo}, {hi}] for {bit_width}-bit storage")
    if bit_width == 1:
        if np.any(v == 0):
            raise InvalidValueError("1-bit storage holds only -1 and +1")
        return (v < 0).astype(np.uint8)
    return (v & ((1 << bit_width) - 1)).astype(np.uint8)


def decode(codes: np.ndarray, bit_width: int) -> np.ndarray:
    c = np.asarray(codes, dtype=np.int16)
    if bit_width == 1:
        return (1 - 2 * c).astype(np.int8)
    sign = 1 << (bit_width - 1)
    return ((c ^ sign) - sign).astype(np.int8)


def pack_codes(codes: np.ndarray, bit_width: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.uint8).ravel()
    shifts = np.arange(bit_width, dtype=np.uint8)
    bits = (codes[:, None] >> shifts) & 1
    return np.packbits(bits.ravel(), bitorder="little")


def unpack_codes(data: np.ndarray, count: int, bit_width: int, first: int = 0) -> np.ndarray:
    """Read ``count`` codes starting at element ``first`` from a packed buffer."""
    start = first * bit_width
    stop = start + count * bit_width
    b0, b1 = start // 8, (stop + 7) // 8
    bits = np.unpackbits(data[b0:b1], bitorder="little")[start - 8 * b0:stop - 8 * b0]
    bits = bits.reshape(count, bit_width).astype(np.uint8)
    weights = (1 << np.arange(bit_width)).astype(np.uint8)
    return (bits * weights).sum(axis=1).astype(np.uint8)


def _normalize_dims(dims: Sequence[int]) -> tuple[int, int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) > 4:
        raise ShapeError(f"at most 4 extents supported, got {dims}")
    if any(d < 0 for d in dims):
        raise ShapeError(f"negative extent in {dims}")
    return dims + (1,) * (4 - len(dims))


class QuantTensor:
    """Fixed-bit-width integer tensor backed by a packed byte buffer.

    The packed buffer is the source of truth; an unpacked code array and a
    float view (used by the matmul kernels) are kept in sync when bits are
    flipped through :meth:`xor_bits`.
    """

    def __init__(self, dims: Sequence[int], bit_width: int, data=None):
        if bit_width not in SUPPORTED_STORAGE_BITS:
            raise InvalidValueError(f"unsupported bit width {bit_width}")
        self.dims = _normalize_dims(dims)
        self.bit_width = int(bit_width)
        nbytes = (self.nbits + 7) // 8
        if data is None:
            self.data = np.zeros(nbytes, dtype=np.uint8)
        else:
            buf = np.frombuffer(bytes(data), dtype=np.uint8).copy() if isinstance(data, (bytes, bytearray)) \
                else np.array(data, dtype=np.uint8).ravel()
            if buf.size != nbytes:
                raise ShapeError(f"expected {nbytes} packed bytes, got {buf.size}")
            pad = 8 * nbytes - self.nbits
            if pad and buf[-1] >> (8 - pad):
                raise InvalidValueError("non-zero pad bits in packed buffer")
            self.data = buf
        self._codes = unpack_codes(self.data, self.size, self.bit_width) if self.size else \
            np.zeros(0, dtype=np.uint8)
        self._float = None

    @classmethod
    def from_values(cls, values, bit_width: int, dims: Sequence[int] | None = None) -> QuantTensor:
        values = np.asarray(values)
        if dims is None:
            dims = values.shape
        t = cls(dims, bit_width)
        if values.size != t.size:
            raise ShapeError(f"{values.size} values do not fit dims {t.dims}")
        codes = encode(values.ravel(), bit_width)
        t.data = pack_codes(codes, bit_width) if codes.size else t.data
        t._codes = codes
        return t

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    @property
    def nbits(self) -> int:
        return self.size * self.bit_width

    @property
    def codes(self) -> np.ndarray:
        """Flat unsigned codes (read-only view)."""
        view = self._codes.view()
        view.flags.writeable = False
        return view

    @property
    def values(self) -> np.ndarray:
        return decode(self._codes, self.bit_width).reshape(self.dims)

    def as_float(self) -> np.ndarray:
        """Flat float64 copy of the decoded values, cached between flips."""
        if self._float is None:
            self._float = decode(self._codes, self.bit_width).astype(np.float64)
        return self._float

    def any_set(self) -> bool:
        return bool(self.data.any())

    def xor_bits(self, start: int, stop: int) -> None:
        """Flip every stored bit in ``[start, stop)``."""
        if not 0 <= start <= stop <= self.nbits:
            raise IndexError(f"bit range [{start}, {stop}) outside tensor of {self.nbits} bits")
        if start == stop:
            return
        idx = np.arange(start, stop)
        np.bitwise_xor.at(self.data, idx >> 3, (1 << (idx & 7)).astype(np.uint8))
        first, last = start // self.bit_width, (stop - 1) // self.bit_width
        fresh = unpack_codes(self.data, last - first + 1, self.bit_width, first)
        self._codes[first:last + 1] = fresh
        if self._float is not None:
            self._float[first:last + 1] = decode(fresh, self.bit_width)

    def copy(self) -> QuantTensor:
        return QuantTensor(self.dims, self.bit_width, self.data.copy())

    def tobytes(self) -> bytes:
        return self.data.tobytes()

    def __eq__(self, other):
        if not isinstance(other, QuantTensor):
            return NotImplemented
        return (self.dims == other.dims and self.bit_width == other.bit_width
                and np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"QuantTensor(dims={self.dims}, bit_width={self.bit_width})"


# --- quantizers -------------------------------------------------------------

def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise InvalidValueError("non-finite input to quantizer")


def quantize_deterministic(w_real: float) -> int:
    _check_finite(w_real)
    return 1 if w_real >= 0 else -1


def hard_sigmoid(w_real):
    """``clip((w + 1) / 2, 0, 1)``; works on scalars and arrays."""
    _check_finite(w_real)
    out = np.clip((np.asarray(w_real, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def quantize_stochastic(w_real: float, rng: np.random.Generator) -> int:
    p = hard_sigmoid(w_real)
    return 1 if rng.random() < p else -1


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_levels(x, bit_width: int, mode: str = "deterministic",
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Elementwise quantization of a real array to integer levels (int8).

    1 bit: sign with ``x >= 0 -> +1`` (or Bernoulli(hard_sigmoid) draws).
    2 bit: ``round_half_away(clip(2x, -2, 1))`` giving levels {-2, -1, 0, 1};
    the stochastic variant rounds the clipped value up with probability equal
    to its fractional part.
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    if bit_width not in QUANTIZER_BITS:
        raise InvalidValueError(f"unsupported quantizer bit width {bit_width}")
    if mode not in ("deterministic", "stochastic"):
        raise InvalidValueError(f"unknown quantization mode {mode!r}")
    if mode == "stochastic" and rng is None:
        raise InvalidValueError("stochastic quantization needs a seeded generator")
    if bit_width == 1:
        if mode == "deterministic":
            return np.where(x >= 0, 1, -1).astype(np.int8)
        return np.where(rng.random(x.shape) < hard_sigmoid(x), 1, -1).astype(np.int8)
    y = np.clip(2.0 * x, -2.0, 1.0)
    if mode == "deterministic":
        return round_half_away(y).astype(np.int8)
    lo = np.floor(y)
    return (lo + (rng.random(x.shape) < (y - lo))).astype(np.int8)


def quantize_tensor(t, bit_width: int, mode: str = "deterministic",
                    rng: np.random.Generator | None = None) -> QuantTensor:
    t = np.asarray(t, dtype=np.float64)
    return QuantTensor.from_values(quantize_levels(t, bit_width, mode, rng), bit_width, t.shape)
