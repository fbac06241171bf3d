"""Single-event and multi-bit upsets, and how faults are scheduled in time.

An SEU flips one stored bit. An MBU flips a burst of 8 consecutive bits in
the flattened address space. Faults accumulate: once applied they persist
for the rest of the batch.
"""
import numpy as np

from qnnfault.faults import Injection, build_address_space, flip_bit, inject_mbu, schedule_uniform
from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import accuracy

net = build_toy(1, 1, np.random.default_rng(0))
space = build_address_space(net, "weight")
print(f"weight address space: {space.size} bits over {len(net.params)} parameter tensors")

# Flipping twice restores the network: upsets are XORs.
digest = net.digest()
flip_bit(net, space, 123)
print("after one SEU the weights differ:", net.digest() != digest)
flip_bit(net, space, 123)
print("a second flip restores them:", net.digest() == digest)

burst = inject_mbu(net.copy(), space, space.size - 3)
print("an MBU near the end is truncated to the bits that exist:", burst.digest() != digest)

# A schedule spreads events over the images of one batch.
ds = synth_dataset(50, rng=np.random.default_rng(1))
sched = schedule_uniform(space, 5, len(ds), "MBU", np.random.default_rng(2))
for ev in sched.events:
    print(f"  image {ev.time:2d}: {ev.mode} at bit {ev.bit_index}")

work = net.copy()
inj = Injection(work, sched)
for t in range(len(ds)):
    inj.apply_due_events(t)
print(f"accuracy with all five bursts applied {accuracy(work, ds):.1f}% vs clean {accuracy(net, ds):.1f}%")
inj.revert()
print("revert restores the clean weights:", work.digest() == digest)
