"""Fitting the factorial regression model to campaign results.

Accuracy is modelled on four factors (bit width, fault mode, domain and fault
count) and all their interactions, 16 terms in total, by least squares.
"""
import numpy as np

from qnnfault.campaign import across_network_grid, run_grid
from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import train
from qnnfault.stats import ModelSpec, build_design_matrix, coefficient_report, ols_fit, predict

train_set = synth_dataset(1000, rng=np.random.default_rng([0, 0]))
eval_set = synth_dataset(100, rng=np.random.default_rng([0, 1]))
nets = {(b, b): train(build_toy(b, b, np.random.default_rng(0)), train_set, 15, 0.005,
                      np.random.default_rng(0)).net for b in (1, 2)}

configs = across_network_grid(counts=(1, 10, 50, 100), trials=15, batch_size=len(eval_set))
table = run_grid(nets, eval_set, configs)
spec = ModelSpec("across")
X, y = build_design_matrix(table, spec)
fit = ols_fit(X, y)
print(coefficient_report(fit))

x = spec.encode(2, "MBU", "weight", 75)
print(f"predicted accuracy, 2-bit net, 75 MBUs in the weights: {predict(fit, x):.2f}%")
