"""Which layers are most vulnerable? Drop probabilities and entropy scores.

For every (layer, fault count) cell the heatmap holds the fraction of trials
whose accuracy fell by more than a threshold. The per-layer entropy score is
the mean binary entropy of those fractions: high where outcomes are least
predictable.
"""
import numpy as np

from qnnfault.campaign import in_layer_grid, run_grid
from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import train
from qnnfault.stats import layer_drop_probability, layer_entropy_score, render_svg

train_set = synth_dataset(1000, rng=np.random.default_rng([0, 0]))
eval_set = synth_dataset(100, rng=np.random.default_rng([0, 1]))
net = train(build_toy(1, 1, np.random.default_rng(0)), train_set, 15, 0.005, np.random.default_rng(0)).net

configs = in_layer_grid(wbits=(1,), modes=("MBU",), layers=(1, 2, 3), counts=(5, 10, 50, 100),
                        trials=30, batch_size=len(eval_set))
table = run_grid({(1, 1): net}, eval_set, configs)
grid = layer_drop_probability(table, threshold=1.0)
print("P(drop > 1 pt)      n=" + "  ".join(f"{c:>5d}" for c in grid.counts))
for layer, row in zip(grid.layers, grid.prob):
    print(f"  layer {layer}            " + "  ".join(f"{p:5.2f}" for p in row))

scores = layer_entropy_score(grid)
for layer, h in zip(scores.layers, scores.entropy):
    print(f"layer {layer}: entropy score {h:.3f}")
print("most vulnerable first:", scores.ranking)

with open("heatmap.svg", "w") as fh:
    fh.write(render_svg(grid, "toy W1A1, MBU"))
print("wrote heatmap.svg")
