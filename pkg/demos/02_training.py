"""Training a binarized toy network with the straight-through estimator.

The trainer keeps real-valued shadow weights, quantizes them on each forward
pass and passes gradients straight through the quantizer.
"""
import numpy as np

from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import accuracy, train

train_set = synth_dataset(1000, rng=np.random.default_rng([0, 0]))
held_out = synth_dataset(300, rng=np.random.default_rng([0, 1]))

for bits in (1, 2):
    net = build_toy(bits, bits, np.random.default_rng(0))
    result = train(net, train_set, epochs=15, lr=0.005, rng=np.random.default_rng(0))
    curve = " ".join(f"{a:.0f}" for a in result.accuracy_history[::3])
    print(f"W{bits}A{bits}: train accuracy by epoch {curve}")
    print(f"       held-out accuracy {accuracy(result.net, held_out):.1f}%")
