"""Seeded fault-injection campaigns over an evaluation batch.

A trial draws a schedule of ``n`` events uniformly over the target bit space
and over image indices ``0..batch-1``, applies each event right before the
image at its time index is classified, and lets the corruption accumulate
for the rest of the batch. Faulty accuracy is measured over the whole batch.
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import InvalidValueError, SchemaError
from .faults.address import DOMAINS, build_address_space
from .faults.schedule import Injection, normalize_mode, schedule_uniform
from .qnn.data import Dataset
from .qnn.network import NetworkModel, predict

ACROSS_FAULT_COUNTS = (1, 2, 5, 10, 20, 50, 100)
IN_LAYER_FAULT_COUNTS = (5, 10, 50, 100)
RESULTS_HEADER = ("scenario_id", "trial", "seed", "wbits", "abits", "fault_mode", "domain", "layer",
                  "n_faults", "baseline_acc", "faulty_acc", "drop")


@dataclass(frozen=True)
class ScenarioConfig:
    wbits: int
    abits: int
    mode: str
    domain: str = "weight"
    layer: int = 0
    n_faults: int = 1
    trials: int = 2000
    batch_size: int = 1000
    base_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if self.domain not in DOMAINS:
            raise InvalidValueError(f"unknown fault domain {self.domain!r}")
        if self.trials < 1:
            raise InvalidValueError("a scenario needs at least one trial")
        if self.n_faults < 0:
            raise InvalidValueError("fault count must be non-negative")
        if self.layer < 0:
            raise InvalidValueError("layer must be 0 (whole network) or a layer number")
        if self.batch_size < 1:
            raise InvalidValueError("batch size must be at least 1")

    @property
    def scenario_id(self) -> str:
        return f"W{self.wbits}A{self.abits}-{self.mode}-{self.domain}-L{self.layer}-n{self.n_faults}"


@dataclass(frozen=True)
class TrialRecord:
    scenario_id: str
    trial: int
    seed: int
    wbits: int
    abits: int
    fault_mode: str
    domain: str
    layer: int
    n_faults: int
    baseline_acc: float
    faulty_acc: float
    drop: float


@dataclass
class ResultsTable:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def where(self, **conditions) -> ResultsTable:
        keep = [r for r in self.records if all(getattr(r, k) == v for k, v in conditions.items())]
        return ResultsTable(keep, dict(self.metadata))

    def extend(self, other: ResultsTable) -> None:
        self.records.extend(other.records)

    def validate(self) -> None:
        seen = set()
        for r in self.records:
            key = (r.scenario_id, r.trial)
            if key in seen:
                raise SchemaError(f"duplicate record {key}")
            seen.add(key)
            for acc in (r.baseline_acc, r.faulty_acc):
                if not 0.0 <= acc <= 100.0:
                    raise SchemaError(f"accuracy {acc} outside [0, 100] in {key}")
            if r.drop != r.baseline_acc - r.faulty_acc:
                raise SchemaError(f"drop != baseline - faulty in {key}")


def trial_seed(base_seed: int, scenario_id: str, trial: int) -> int:
    """64-bit seed mixed from the campaign seed, scenario and trial index."""
    h = hashlib.blake2b(f"{base_seed}:{scenario_id}:{trial}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def _check(net: NetworkModel, dataset: Dataset, config: ScenarioConfig) -> None:
    if (net.weight_bits, net.activation_bits) != (config.wbits, config.abits):
        raise InvalidValueError(f"network is W{net.weight_bits}A{net.activation_bits}, "
                                f"scenario expects W{config.wbits}A{config.abits}")
    if len(dataset) != config.batch_size:
        raise InvalidValueError(f"dataset holds {len(dataset)} images, batch size is {config.batch_size}")
    if config.layer > len(net.param_layers):
        raise InvalidValueError(f"layer {config.layer} outside 1..{len(net.param_layers)}")


def baseline_hits(net: NetworkModel, dataset: Dataset) -> np.ndarray:
    """Per-image correctness of the pristine network."""
    return predict(net, dataset.images) == dataset.labels


def _faulty_correct(net: NetworkModel, dataset: Dataset, config: ScenarioConfig, rng,
                    hits: np.ndarray) -> int:
    space = build_address_space(net, config.domain, config.layer)
    schedule = schedule_uniform(space, config.n_faults, config.batch_size, config.mode, rng)
    times = schedule.times()
    if times.size == 0:
        return int(hits.sum())
    # the network only changes at event times, so classify whole segments at once
    starts = np.unique(times)
    correct = int(hits[:starts[0]].sum())
    injection = Injection(net, schedule)
    try:
        for k, t in enumerate(starts):
            end = starts[k + 1] if k + 1 < starts.size else config.batch_size
            injection.apply_due_events(int(t))
            correct += int(np.sum(predict(net, dataset.images[t:end]) == dataset.labels[t:end]))
    finally:
        injection.revert()
    return correct


def _record(config, trial, seed, baseline, correct) -> TrialRecord:
    faulty = 100.0 * correct / config.batch_size
    return TrialRecord(config.scenario_id, trial, seed, config.wbits, config.abits, config.mode,
                       config.domain, config.layer, config.n_faults, baseline, faulty, baseline - faulty)


def run_trial(base_net: NetworkModel, dataset: Dataset, config: ScenarioConfig, trial_index: int,
              hits: np.ndarray | None = None) -> TrialRecord:
    """One trial on a private copy of ``base_net``."""
    _check(base_net, dataset, config)
    if hits is None:
        hits = baseline_hits(base_net, dataset)
    baseline = 100.0 * int(hits.sum()) / config.batch_size
    seed = trial_seed(config.base_seed, config.scenario_id, trial_index)
    correct = _faulty_correct(base_net.copy(), dataset, config, np.random.default_rng(seed), hits)
    return _record(config, trial_index, seed, baseline, correct)


def _default_threads() -> int:
    return os.cpu_count() or 1


def run_scenario(net: NetworkModel, dataset: Dataset, config: ScenarioConfig,
                 threads: int | None = None, hits: np.ndarray | None = None) -> ResultsTable:
    """All trials of one scenario, in trial-index order whatever the thread count."""
    _check(net, dataset, config)
    if hits is None:
        hits = baseline_hits(net, dataset)
    baseline = 100.0 * int(hits.sum()) / config.batch_size
    local = threading.local()

    def one(trial):
        if not hasattr(local, "net"):
            local.net = net.copy()
        seed = trial_seed(config.base_seed, config.scenario_id, trial)
        correct = _faulty_correct(local.net, dataset, config, np.random.default_rng(seed), hits)
        return _record(config, trial, seed, baseline, correct)

    threads = threads or _default_threads()
    if threads == 1:
        records = [one(t) for t in range(config.trials)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(one, range(config.trials)))
    return ResultsTable(records, {"scenario_id": config.scenario_id})


def summarize(table: ResultsTable) -> dict:
    """Mean/std/min faulty accuracy and mean/max drop, computed in trial order."""
    acc = table.column("faulty_acc")
    drop = table.column("drop")
    return {"trials": len(table), "mean_acc": float(acc.mean()), "std_acc": float(acc.std()),
            "min_acc": float(acc.min()), "mean_drop": float(drop.mean()),
            "max_drop": float(drop.max())}


def run_grid(nets: dict, dataset: Dataset, configs, threads: int | None = None) -> ResultsTable:
    """Run every scenario; ``nets`` maps ``(wbits, abits)`` to a pristine network."""
    configs = list(configs)
    if not configs:
        raise InvalidValueError("empty scenario grid")
    ids = [c.scenario_id for c in configs]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise InvalidValueError(f"duplicate scenario ids: {', '.join(dup)}")
    hits_cache = {}
    table = ResultsTable()
    for c in configs:
        key = (c.wbits, c.abits)
        if key not in nets:
            raise InvalidValueError(f"no network supplied for W{c.wbits}A{c.abits}")
        if key not in hits_cache:
            hits_cache[key] = baseline_hits(nets[key], dataset)
        table.extend(run_scenario(nets[key], dataset, c, threads, hits_cache[key]))
    return table


def across_network_grid(wbits=(1, 2), modes=("SEU", "MBU"), domains=DOMAINS,
                        counts=ACROSS_FAULT_COUNTS, **common) -> list[ScenarioConfig]:
    """Full factorial of bit width x mode x domain x fault count, whole-network scope."""
    return [ScenarioConfig(w, w, m, d, 0, n, **common)
            for w, m, d, n in itertools.product(wbits, modes, domains, counts)]


def in_layer_grid(wbits=(1, 2), modes=("SEU", "MBU"), layers=range(1, 10),
                  counts=IN_LAYER_FAULT_COUNTS, domain="weight", **common) -> list[ScenarioConfig]:
    return [ScenarioConfig(w, w, m, domain, k, n, **common)
            for w, m, k, n in itertools.product(wbits, modes, layers, counts)]


# --- persistence ------------------------------------------------------------

_TYPES = {f.name: f.type for f in fields(TrialRecord)}
_CASTS = {"int": int, "float": float, "str": str}


def save_results(table: ResultsTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in table.records:
            row = asdict(r)
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in RESULTS_HEADER])


def load_results(path) -> ResultsTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty results file")
        unknown = [h for h in header if h not in RESULTS_HEADER]
        missing = [h for h in RESULTS_HEADER if h not in header]
        if unknown or missing:
            raise SchemaError(f"{path}: unknown columns {unknown}, missing columns {missing}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                values = {k: _CASTS[_TYPES[k]](v) for k, v in zip(header, row)}
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            records.append(TrialRecord(**values))
    table = ResultsTable(records)
    table.validate()
    return table


def load_many(paths) -> ResultsTable:
    table = ResultsTable()
    for p in paths:
        table.extend(load_results(p))
    table.validate()
    return table

