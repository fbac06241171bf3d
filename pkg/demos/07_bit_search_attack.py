"""A greedy bit-search attack: the worst faults rather than random ones.

At each step every candidate weight bit is flipped in turn and the flip that
raises the loss most is kept. Compare the damage with the same number of
random flips.
"""
import numpy as np

from qnnfault.faults import bit_search_attack, build_address_space, flip_bit
from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import accuracy, train

train_set = synth_dataset(1000, rng=np.random.default_rng([0, 0]))
eval_set = synth_dataset(64, rng=np.random.default_rng([0, 1]))
net = train(build_toy(1, 1, np.random.default_rng(0)), train_set, 15, 0.005, np.random.default_rng(0)).net

result = bit_search_attack(net, eval_set, 5)
print("flipped bits:", result.flips)
print("loss after each flip:", " ".join(f"{v:.3f}" for v in result.loss_trace))
print(f"accuracy {accuracy(net, eval_set):.1f}% -> {accuracy(result.net, eval_set):.1f}% after 5 chosen flips")

space = build_address_space(net, "weight")
rng = np.random.default_rng(0)
random_acc = []
for _ in range(20):
    work = net.copy()
    for bit in rng.choice(space.size, 5, replace=False):
        flip_bit(work, space, int(bit))
    random_acc.append(accuracy(work, eval_set))
print(f"5 random flips: mean accuracy {np.mean(random_acc):.1f}%")
