"""Packing quantized weights and running bit-exact inference.

Weights live as packed bit codes. A 1-bit code 0 means +1 and 1 means -1;
2-bit codes are two's complement over {-2, -1, 0, 1}. Every layer computes
in exact integers, so two runs over the same bits always agree.
"""
import numpy as np

from qnnfault.model_io import build_arch, count_susceptible_bits, synth_dataset
from qnnfault.qnn import QuantTensor, accuracy, predict, quantize_levels

# Real-valued weights are quantized, then packed little-endian.
w = np.array([0.7, -0.2, 0.0, -1.3, 0.4])
for bits in (1, 2):
    levels = quantize_levels(w, bits)
    t = QuantTensor.from_values(levels, bits)
    print(f"{bits}-bit levels {levels.tolist()} -> bytes {t.data.tolist()}")

# Network sizes: the storage a fault could land in.
for name in ("toy", "cnvW1A1", "cnvW2A2"):
    net = build_arch(name)
    print(f"{name:8s} weight bits {count_susceptible_bits(net, 'weight'):>10,}"
          f"  activation bits {count_susceptible_bits(net, 'activation'):>8,}")

# An untrained toy net on synthetic images: the output is deterministic.
net = build_arch("toy", np.random.default_rng(0))
ds = synth_dataset(100, rng=np.random.default_rng(1))
first, second = predict(net, ds.images), predict(net, ds.images)
print("predictions repeat exactly:", np.array_equal(first, second))
print(f"untrained accuracy {accuracy(net, ds):.1f}% (chance is 10%)")
