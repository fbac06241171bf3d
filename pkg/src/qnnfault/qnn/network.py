"""Quantized network container and batched inference."""
from __future__ import annotations

import hashlib
import math
from typing import Sequence

import numpy as np

from ..errors import DataError, ShapeError
from .data import Dataset
from .layers import (LayerKind, LayerSpec, activate_batch, conv2d_batch, maxpool_batch)
from .quant import QuantTensor


class NetworkModel:
    """Ordered layers plus packed weights and per-activation XOR fault masks.

    ``params[j]`` holds the weights of the j-th Conv2d/FullyConnected layer in
    forward order. ``activation_masks[j]`` is the XOR mask applied to the
    packed output of the j-th QuantActivation layer; it is sized for a single
    image and is all-zero on a pristine network.

    Each activation quantizes ``pre_act / sqrt(fan_in)`` where ``fan_in`` is
    that of the closest preceding weighted layer. Sign activations are
    unaffected by the scale; the 2-bit levels need it because no
    normalization layer is modelled.
    """

    def __init__(self, layers: Sequence[LayerSpec], input_shape: Sequence[int],
                 params: Sequence[QuantTensor] | None = None, name: str = "custom"):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.name = name
        if len(self.input_shape) != 3:
            raise ShapeError("input_shape must be (C, H, W)")
        self.shapes = []
        shape = self.input_shape
        for spec in self.layers:
            shape = spec.output_shape(shape)
            self.shapes.append(shape)

        self.param_layers = [i for i, s in enumerate(self.layers) if s.has_weights]
        self.act_layers = [i for i, s in enumerate(self.layers)
                           if s.kind == LayerKind.QUANT_ACTIVATION]
        if params is None:
            params = [QuantTensor(self.layers[i].weight_dims, self.layers[i].weight_bits)
                      for i in self.param_layers]
        params = list(params)
        if len(params) != len(self.param_layers):
            raise ShapeError(f"{len(params)} weight tensors for {len(self.param_layers)} weighted layers")
        for i, p in zip(self.param_layers, params):
            spec = self.layers[i]
            if p.dims != spec.weight_dims or p.bit_width != spec.weight_bits:
                raise ShapeError(f"layer {i}: weights {p.dims}/{p.bit_width}b, "
                                 f"expected {spec.weight_dims}/{spec.weight_bits}b")
        self.params = params
        self.activation_masks = [
            QuantTensor((1,) + self.shapes[i], self.layers[i].activation_bits)
            for i in self.act_layers]

        self.act_scales = {}
        fan_in = None
        for i, spec in enumerate(self.layers):
            if spec.has_weights:
                fan_in = spec.fan_in
            elif spec.kind == LayerKind.QUANT_ACTIVATION:
                self.act_scales[i] = 1.0 / math.sqrt(fan_in) if fan_in else 1.0
        self.score_scale = 1.0 / math.sqrt(self.layers[self.param_layers[-1]].fan_in) \
            if self.param_layers else 1.0
        self._param_of = {li: j for j, li in enumerate(self.param_layers)}
        self._mask_of = {li: j for j, li in enumerate(self.act_layers)}

    # -- structure ---------------------------------------------------------
    @property
    def conv_layer_count(self) -> int:
        return sum(1 for s in self.layers if s.kind == LayerKind.CONV2D)

    @property
    def output_size(self) -> int:
        return math.prod(self.shapes[-1])

    @property
    def weight_bits(self) -> int:
        return max((self.layers[i].weight_bits for i in self.param_layers), default=0)

    @property
    def activation_bits(self) -> int:
        return max((self.layers[i].activation_bits for i in self.act_layers), default=0)

    def weights_of(self, layer_index: int) -> QuantTensor:
        return self.params[self._param_of[layer_index]]

    def mask_of(self, layer_index: int) -> QuantTensor:
        return self.activation_masks[self._mask_of[layer_index]]

    def copy(self) -> NetworkModel:
        net = NetworkModel(self.layers, self.input_shape, [p.copy() for p in self.params], self.name)
        net.activation_masks = [m.copy() for m in self.activation_masks]
        return net

    def state_bytes(self) -> bytes:
        """Every stored weight and mask bit, concatenated."""
        return b"".join(t.tobytes() for t in self.params + self.activation_masks)

    def digest(self) -> str:
        return hashlib.sha256(self.state_bytes()).hexdigest()

    def clear_masks(self) -> None:
        for m in self.activation_masks:
            m.data[:] = 0
            m._codes[:] = 0

    def __repr__(self):
        return f"NetworkModel({self.name!r}, {len(self.layers)} layers, input={self.input_shape})"

    # -- inference ---------------------------------------------------------
    def forward(self, x: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
        """Run layers ``[start, stop)`` on a batch whose shape matches layer ``start``'s input."""
        stop = len(self.layers) if stop is None else stop
        for i in range(start, stop):
            spec = self.layers[i]
            kind = spec.kind
            if kind == LayerKind.CONV2D:
                w = self.weights_of(i).as_float().reshape(spec.out_channels, -1)
                x = conv2d_batch(x, w, spec.kernel_size)
            elif kind == LayerKind.FULLY_CONNECTED:
                w = self.weights_of(i).as_float().reshape(spec.out_features, -1)
                x = (x.reshape(x.shape[0], -1) @ w.T).reshape(x.shape[0], -1, 1, 1)
            elif kind == LayerKind.MAXPOOL2D:
                x = maxpool_batch(x, spec.pool_size)
            else:
                mask = self.mask_of(i)
                codes = mask.codes if mask.any_set() else None
                x = activate_batch(x, spec.activation_bits, codes, self.act_scales[i])
        return x


def _image_batch(net: NetworkModel, images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"image extents {x.shape[1:]} do not match network input {net.input_shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite pixel values")
    return x


def infer(net: NetworkModel, images) -> np.ndarray:
    """Class scores for one image ``(C, H, W)`` or a batch ``(N, C, H, W)``.

    Returns a vector for a single image and an ``(N, classes)`` array otherwise.
    """
    x = _image_batch(net, images)
    scores = net.forward(x).reshape(x.shape[0], -1)
    return scores[0] if np.ndim(images) == 3 else scores


def predict(net: NetworkModel, images) -> np.ndarray:
    """Predicted class per image; ties resolve to the lowest class index."""
    scores = infer(net, images)
    return np.argmax(np.atleast_2d(scores), axis=1)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    m = np.max(s, axis=-1, keepdims=True)
    return s - m - np.log(np.sum(np.exp(s - m), axis=-1, keepdims=True))


def loss(scores, label: int) -> float:
    """Cross-entropy of ``softmax(scores)`` at ``label``."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= label < s.size:
        raise ShapeError(f"label {label} outside {s.size} scores")
    return max(0.0, float(-log_softmax(s)[label]))


def mean_loss(scores: np.ndarray, labels: np.ndarray) -> float:
    lp = log_softmax(np.atleast_2d(scores))
    return float(-lp[np.arange(lp.shape[0]), labels].mean())


def network_loss(net: NetworkModel, images, labels) -> float:
    """Mean cross-entropy of the network on a batch, with scores temperature-scaled."""
    return mean_loss(infer(net, images).reshape(len(labels), -1) * net.score_scale, np.asarray(labels))


def accuracy(net: NetworkModel, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise DataError("accuracy of an empty dataset is undefined")
    correct = int(np.sum(predict(net, dataset.images) == dataset.labels))
    return 100.0 * correct / len(dataset)
