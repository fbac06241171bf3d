"""Slow, obviously-correct reference implementations used by the tests."""
import numpy as np

from qnnfault.model_io import randomize_weights
from qnnfault.qnn import LayerSpec, NetworkModel


def conv_direct(x, w):
    """Valid stride-1 cross-correlation with six nested loops; x (C,H,W), w (O,C,k,k)."""
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    out = np.zeros((o, h - k + 1, wd - k + 1), dtype=np.int64)
    for oc in range(o):
        for i in range(h - k + 1):
            for j in range(wd - k + 1):
                acc = 0
                for ic in range(c):
                    for a in range(k):
                        for b in range(k):
                            acc += int(x[ic, i + a, j + b]) * int(w[oc, ic, a, b])
                out[oc, i, j] = acc
    return out


def maxpool_direct(x, p):
    c, h, w = x.shape
    out = np.empty((c, h // p, w // p), dtype=x.dtype)
    for ch in range(c):
        for i in range(h // p):
            for j in range(w // p):
                out[ch, i, j] = max(x[ch, i * p + a, j * p + b] for a in range(p) for b in range(p))
    return out


def fc_direct(x, w):
    flat = [int(v) for v in np.ravel(x)]
    return np.array([sum(int(w[o, i]) * flat[i] for i in range(len(flat))) for o in range(w.shape[0])],
                    dtype=np.int64)


def ols_textbook(X, y):
    """Normal-equation OLS with explicit inverse: beta, se, t, R2, adjusted R2."""
    n, k = X.shape
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    s2 = resid @ resid / (n - k)
    se = np.sqrt(np.diag(xtx_inv) * s2)
    r2 = 1 - (resid @ resid) / np.sum((y - y.mean()) ** 2)
    adj = 1 - (1 - r2) * (n - 1) / (n - k)
    return beta, se, beta / se, r2, adj


def small_conv_net(rng, bits=1):
    """1,580-weight conv net on 3x8x8 inputs, small enough for exhaustive bit search."""
    layers = [LayerSpec.conv(3, 4, 3, bits), LayerSpec.act(bits), LayerSpec.maxpool(2),
              LayerSpec.fc(36, 32, bits), LayerSpec.act(bits), LayerSpec.fc(32, 10, bits)]
    net = NetworkModel(layers, (3, 8, 8), name="small")
    randomize_weights(net, rng)
    return net
