"""Desk-scale trainer for quantized networks.

Shadow (real-valued) weights are optimized with Adam. The forward pass uses
their quantized levels; the backward pass treats every quantizer as its
surrogate (``hardtanh`` for 1 bit, ``clip(2x, -2, 1)`` for 2 bits), i.e. the
straight-through estimator. Running the forward pass with the surrogates
themselves (``surrogate=True``) gives a smooth function whose exact gradient
is what the backward code computes, which is how the gradient is tested.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError, InvalidValueError
from .data import Dataset
from .layers import LayerKind
from .network import NetworkModel, accuracy, log_softmax
from .quant import QuantTensor, quantize_levels


class TrainResult(NamedTuple):
    net: NetworkModel
    shadow: list
    accuracy_history: list
    loss_history: list


def _surrogate(x: np.ndarray, bits: int) -> np.ndarray:
    return np.clip(x, -1.0, 1.0) if bits == 1 else np.clip(2.0 * x, -2.0, 1.0)


def _surrogate_grad(x: np.ndarray, bits: int) -> np.ndarray:
    if bits == 1:
        return (np.abs(x) <= 1.0).astype(np.float64)
    return 2.0 * ((x >= -1.0) & (x <= 0.5))


def shadow_from_net(net: NetworkModel) -> list:
    """Real-valued weights whose deterministic quantization reproduces ``net``'s weights."""
    out = []
    for p in net.params:
        v = p.values.astype(np.float64)
        out.append(0.25 * v if p.bit_width == 1 else 0.5 * v)
    return out


def effective_weights(net: NetworkModel, shadow, surrogate=False, mode="deterministic", rng=None):
    out = []
    for i, w in zip(net.param_layers, shadow):
        bits = net.layers[i].weight_bits
        if surrogate:
            out.append(_surrogate(w, bits))
        else:
            out.append(quantize_levels(w, bits, mode, rng).astype(np.float64))
    return out


def _forward(net, weights, x, surrogate):
    caches = []
    wi = 0
    for i, spec in enumerate(net.layers):
        kind = spec.kind
        if kind == LayerKind.CONV2D:
            k = spec.kernel_size
            n, c, h, w = x.shape
            ho, wo = h - k + 1, w - k + 1
            wmat = weights[wi].reshape(spec.out_channels, -1)
            cols = sliding_window_view(x, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5).reshape(-1, c * k * k)
            caches.append((cols, x.shape, wi))
            x = (cols @ wmat.T).reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)
            wi += 1
        elif kind == LayerKind.FULLY_CONNECTED:
            flat = x.reshape(x.shape[0], -1)
            caches.append((flat, x.shape, wi))
            x = (flat @ weights[wi].reshape(spec.out_features, -1).T).reshape(x.shape[0], -1, 1, 1)
            wi += 1
        elif kind == LayerKind.MAXPOOL2D:
            p = spec.pool_size
            n, c, h, w = x.shape
            win = x.reshape(n, c, h // p, p, w // p, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // p, w // p, p * p)
            arg = np.argmax(win, axis=-1)
            caches.append((arg, x.shape))
            x = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        else:
            z = x * net.act_scales[i]
            caches.append(z)
            bits = spec.activation_bits
            x = _surrogate(z, bits) if surrogate else quantize_levels(z, bits).astype(np.float64)
    return x.reshape(x.shape[0], -1), caches


def _backward(net, weights, caches, dscores):
    grads = [None] * len(weights)
    d = dscores
    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        kind = spec.kind
        cache = caches[i]
        if kind == LayerKind.CONV2D:
            cols, in_shape, wi = cache
            k = spec.kernel_size
            n, c, h, w = in_shape
            ho, wo = h - k + 1, w - k + 1
            dmat = d.transpose(0, 2, 3, 1).reshape(-1, spec.out_channels)
            grads[wi] = (dmat.T @ cols).reshape(weights[wi].shape)
            if i == 0:
                break
            dcols = (dmat @ weights[wi].reshape(spec.out_channels, -1)).reshape(n, ho, wo, c, k, k)
            dx = np.zeros(in_shape)
            for a in range(k):
                for b in range(k):
                    dx[:, :, a:a + ho, b:b + wo] += dcols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
            d = dx
        elif kind == LayerKind.FULLY_CONNECTED:
            flat, in_shape, wi = cache
            dmat = d.reshape(d.shape[0], -1)
            grads[wi] = (dmat.T @ flat).reshape(weights[wi].shape)
            if i == 0:
                break
            d = (dmat @ weights[wi].reshape(spec.out_features, -1)).reshape(in_shape)
        elif kind == LayerKind.MAXPOOL2D:
            arg, in_shape = cache
            p = spec.pool_size
            n, c, h, w = in_shape
            dwin = np.zeros((n, c, h // p, w // p, p * p))
            np.put_along_axis(dwin, arg[..., None], d.reshape(n, c, h // p, w // p, 1), axis=-1)
            d = dwin.reshape(n, c, h // p, w // p, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(in_shape)
        else:
            d = d.reshape(cache.shape) * _surrogate_grad(cache, spec.activation_bits) * net.act_scales[i]
    return grads


def loss_and_grad(net: NetworkModel, shadow, images, labels, surrogate=False,
                  mode="deterministic", rng=None):
    """Mean scaled cross-entropy and its STE gradient w.r.t. the shadow weights."""
    weights = effective_weights(net, shadow, surrogate, mode, rng)
    scores, caches = _forward(net, weights, np.asarray(images, dtype=np.float64), surrogate)
    logits = scores * net.score_scale
    lp = log_softmax(logits)
    n = len(labels)
    value = float(-lp[np.arange(n), labels].mean())
    dlogits = np.exp(lp)
    dlogits[np.arange(n), labels] -= 1.0
    dscores = dlogits / n * net.score_scale
    last = net.shapes[-1]
    grads_eff = _backward(net, weights, caches, dscores.reshape((n,) + last))
    grads = []
    for i, w, g in zip(net.param_layers, shadow, grads_eff):
        grads.append(g * _surrogate_grad(w, net.layers[i].weight_bits))
    return value, grads


def _to_params(net, shadow):
    return [QuantTensor.from_values(quantize_levels(w, p.bit_width), p.bit_width, p.dims)
            for w, p in zip(shadow, net.params)]


def train(net: NetworkModel, dataset: Dataset, epochs: int, lr: float, rng: np.random.Generator,
          batch_size: int = 64, mode: str = "deterministic", shadow=None) -> TrainResult:
    """Minimize mean cross-entropy over ``dataset``; returns a new network.

    ``mode="stochastic"`` draws weight levels from the stochastic binarizer on
    every forward pass; the returned network is always the deterministic
    quantization of the final shadow weights.
    """
    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    if not lr >= 0 or not np.isfinite(lr):
        raise InvalidValueError(f"learning rate must be non-negative, got {lr}")
    if epochs < 0:
        raise InvalidValueError("epochs must be non-negative")
    shadow = [np.array(w, dtype=np.float64) for w in (shadow if shadow is not None else shadow_from_net(net))]
    m = [np.zeros_like(w) for w in shadow]
    v = [np.zeros_like(w) for w in shadow]
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0
    n = len(dataset)
    acc_hist, loss_hist = [], []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            value, grads = loss_and_grad(net, shadow, dataset.images[idx], dataset.labels[idx],
                                         mode=mode, rng=rng)
            total += value * len(idx)
            step += 1
            for j, g in enumerate(grads):
                m[j] = b1 * m[j] + (1 - b1) * g
                v[j] = b2 * v[j] + (1 - b2) * g * g
                mhat = m[j] / (1 - b1 ** step)
                vhat = v[j] / (1 - b2 ** step)
                shadow[j] = np.clip(shadow[j] - lr * mhat / (np.sqrt(vhat) + eps), -1.0, 1.0)
        loss_hist.append(total / n)
        trained = NetworkModel(net.layers, net.input_shape, _to_params(net, shadow), net.name)
        acc_hist.append(accuracy(trained, dataset))
    trained = NetworkModel(net.layers, net.input_shape, _to_params(net, shadow), net.name)
    return TrainResult(trained, shadow, acc_hist, loss_hist)
