"""Running a reproducible fault-injection campaign.

Each trial draws a fresh fault schedule from a seed derived from the base
seed, the scenario id and the trial number, so results do not depend on the
thread count or on which other scenarios are run.
"""
import numpy as np

from qnnfault.campaign import ScenarioConfig, run_scenario, summarize
from qnnfault.model_io import build_toy, synth_dataset
from qnnfault.qnn import train

train_set = synth_dataset(1000, rng=np.random.default_rng([0, 0]))
eval_set = synth_dataset(100, rng=np.random.default_rng([0, 1]))
net = train(build_toy(1, 1, np.random.default_rng(0)), train_set, 15, 0.005, np.random.default_rng(0)).net

for mode in ("SEU", "MBU"):
    for n in (1, 10, 100):
        cfg = ScenarioConfig(1, 1, mode, "weight", 0, n, trials=50, batch_size=len(eval_set))
        s = summarize(run_scenario(net, eval_set, cfg))
        print(f"{cfg.scenario_id:24s} mean drop {s['mean_drop']:6.2f}  worst drop {s['max_drop']:6.2f}")

cfg = ScenarioConfig(1, 1, "MBU", n_faults=20, trials=20, batch_size=len(eval_set), base_seed=5)
same = run_scenario(net, eval_set, cfg, threads=1).records == run_scenario(net, eval_set, cfg, threads=4).records
print("1 thread and 4 threads give identical records:", same)
