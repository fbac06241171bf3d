import numpy as np
import pytest

from qnnfault.campaign import (RESULTS_HEADER, ResultsTable, ScenarioConfig, TrialRecord,
                               across_network_grid, in_layer_grid, load_many, load_results, run_grid,
                               run_scenario, run_trial, save_results, summarize, trial_seed)
from qnnfault.errors import InvalidValueError, SchemaError
from qnnfault.faults import FaultEvent, FaultSchedule, Injection, build_address_space, schedule_uniform
from qnnfault.model_io import build_cnv, build_toy, synth_dataset
from qnnfault.qnn import NetworkModel, accuracy, predict
from qnnfault.qnn.quant import QuantTensor


@pytest.fixture(scope="module")
def setup():
    net = build_toy(1, 1, np.random.default_rng(0))
    ds = synth_dataset(40, rng=np.random.default_rng(1))
    return net, ds


def test_zero_faults_zero_drop(setup):
    net, ds = setup
    table = run_scenario(net, ds, ScenarioConfig(1, 1, "SEU", n_faults=0, trials=5, batch_size=40))
    assert (table.column("drop") == 0).all()
    assert table.records[0].baseline_acc == accuracy(net, ds)


def _naive_trial(net, ds, config, trial):
    """Step image by image, applying every event due at that image first."""
    net = net.copy()
    rng = np.random.default_rng(trial_seed(config.base_seed, config.scenario_id, trial))
    space = build_address_space(net, config.domain, config.layer)
    sched = schedule_uniform(space, config.n_faults, config.batch_size, config.mode, rng)
    inj = Injection(net, sched)
    correct = 0
    for t in range(config.batch_size):
        inj.apply_due_events(t)
        correct += int(predict(net, ds.images[t])[0] == ds.labels[t])
    return 100.0 * correct / config.batch_size


@pytest.mark.parametrize("mode, domain, layer", [("SEU", "weight", 0), ("MBU", "weight", 0),
                                                 ("MBU", "activation", 0), ("SEU", "activation", 1),
                                                 ("MBU", "weight", 2)])
def test_trial_matches_per_image_oracle(setup, mode, domain, layer):
    net, ds = setup
    config = ScenarioConfig(1, 1, mode, domain, layer, 30, trials=4, batch_size=40, base_seed=3)
    table = run_scenario(net, ds, config, threads=2)
    for r in table.records:
        assert r.faulty_acc == _naive_trial(net, ds, config, r.trial)
        assert r.drop == r.baseline_acc - r.faulty_acc


def test_all_bits_inverted_oracle(setup):
    net, ds = setup
    space = build_address_space(net)
    events = tuple(FaultEvent("SEU", "weight", 0, b, 0) for b in range(space.size))
    work = net.copy()
    inj = Injection(work, FaultSchedule(space, events, len(ds)))
    inj.apply_due_events(0)
    inverted = []
    for p in net.params:
        bits = np.unpackbits(p.data, bitorder="little")
        bits[:p.nbits] ^= 1
        inverted.append(QuantTensor(p.dims, p.bit_width, np.packbits(bits, bitorder="little")))
    direct = NetworkModel(net.layers, net.input_shape, inverted)
    assert accuracy(work, ds) == accuracy(direct, ds)
    assert np.array_equal(predict(work, ds.images), predict(direct, ds.images))
    inj.revert()
    assert work.digest() == net.digest()


def test_scenario_determinism_and_threads(setup):
    net, ds = setup
    config = ScenarioConfig(1, 1, "MBU", n_faults=10, trials=12, batch_size=40, base_seed=9)
    a = run_scenario(net, ds, config, threads=1)
    b = run_scenario(net, ds, config, threads=8)
    assert a.records == b.records
    assert [r.trial for r in a.records] == list(range(12))
    assert len({r.seed for r in a.records}) == 12
    other = run_scenario(net, ds, ScenarioConfig(1, 1, "MBU", n_faults=10, trials=12, batch_size=40,
                                                 base_seed=10), threads=1)
    assert other.column("seed").tolist() != a.column("seed").tolist()


def test_run_trial_equals_scenario_row(setup):
    net, ds = setup
    config = ScenarioConfig(1, 1, "SEU", n_faults=20, trials=3, batch_size=40)
    table = run_scenario(net, ds, config, threads=1)
    assert run_trial(net, ds, config, 2) == table.records[2]


def test_base_net_is_not_mutated(setup):
    net, ds = setup
    digest = net.digest()
    run_scenario(net, ds, ScenarioConfig(1, 1, "MBU", "activation", n_faults=50, trials=5, batch_size=40))
    assert net.digest() == digest


def test_config_errors(setup):
    net, ds = setup
    with pytest.raises(InvalidValueError):
        run_scenario(net, ds, ScenarioConfig(2, 2, "SEU", batch_size=40))
    with pytest.raises(InvalidValueError):
        run_scenario(net, ds, ScenarioConfig(1, 1, "SEU", batch_size=41))
    with pytest.raises(InvalidValueError):
        run_scenario(net, ds, ScenarioConfig(1, 1, "SEU", layer=4, batch_size=40))
    with pytest.raises(InvalidValueError):
        ScenarioConfig(1, 1, "XYZ")
    with pytest.raises(InvalidValueError):
        ScenarioConfig(1, 1, "SEU", trials=0)
    with pytest.raises(InvalidValueError):
        ScenarioConfig(1, 1, "SEU", domain="cache")


def test_grid_sizes_and_ids():
    across = across_network_grid(trials=1, batch_size=10)
    inlayer = in_layer_grid(trials=1, batch_size=10)
    assert len(across) == 56 and len(inlayer) == 144
    assert len({c.scenario_id for c in across + inlayer}) == 200
    assert across[0].scenario_id == "W1A1-SEU-weight-L0-n1"


def test_run_grid(setup):
    net, ds = setup
    nets = {(1, 1): net, (2, 2): build_toy(2, 2, np.random.default_rng(5))}
    configs = across_network_grid(counts=(1, 5), trials=2, batch_size=40)
    table = run_grid(nets, ds, configs, threads=2)
    assert len(table) == 16 * 2
    with pytest.raises(InvalidValueError):
        run_grid(nets, ds, configs + configs[:1])
    with pytest.raises(InvalidValueError):
        run_grid({(1, 1): net}, ds, configs)


def test_summarize():
    recs = [TrialRecord("s", i, 0, 1, 1, "SEU", "weight", 0, 1, 90.0, f, 90.0 - f)
            for i, f in enumerate([90.0, 80.0, 85.0])]
    s = summarize(ResultsTable(recs))
    assert s["mean_acc"] == 85.0 and s["min_acc"] == 80.0 and s["max_drop"] == 10.0
    assert s["mean_drop"] == 5.0


def test_csv_round_trip(tmp_path, setup):
    net, ds = setup
    table = run_scenario(net, ds, ScenarioConfig(1, 1, "MBU", n_faults=7, trials=6, batch_size=40))
    path = tmp_path / "r.csv"
    save_results(table, path)
    assert path.read_text().splitlines()[0] == ",".join(RESULTS_HEADER)
    back = load_results(path)
    assert back.records == table.records
    save_results(back, tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
    assert len(load_many([path])) == 6


def test_csv_schema_errors(tmp_path):
    header = ",".join(RESULTS_HEADER)
    row = "s,0,1,1,1,SEU,weight,0,1,90.0,80.0,10.0"
    cases = {
        "extra.csv": header + ",color\n" + row + ",red\n",
        "missing.csv": header.replace(",drop", "") + "\n" + row.rsplit(",", 1)[0] + "\n",
        "short.csv": header + "\n" + "s,0,1\n",
        "badnum.csv": header + "\n" + row.replace("90.0", "ninety") + "\n",
        "baddrop.csv": header + "\n" + row.replace(",10.0", ",11.0") + "\n",
        "dup.csv": header + "\n" + row + "\n" + row + "\n",
        "empty.csv": "",
    }
    for name, text in cases.items():
        (tmp_path / name).write_text(text)
        with pytest.raises(SchemaError):
            load_results(tmp_path / name)


def test_in_layer_activation_on_cnv():
    net = build_cnv(1, 1, 8, np.random.default_rng(2))
    ds = synth_dataset(10, rng=np.random.default_rng(2), image_shape=(3, 32, 32))
    table = run_scenario(net, ds, ScenarioConfig(1, 1, "SEU", "activation", 8, 5, trials=2, batch_size=10))
    assert len(table) == 2 and all(r.layer == 8 for r in table.records)
