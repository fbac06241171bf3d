"""Acceptance suite: one test per criterion, each printing a PASS/FAIL summary line."""
import os
import time
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from oracles import conv_direct, fc_direct, maxpool_direct, ols_textbook, small_conv_net
from qnnfault import cli
from qnnfault.campaign import ScenarioConfig, in_layer_grid, run_grid, run_scenario, summarize
from qnnfault.faults import bit_search_attack, build_address_space, flip_bit, inject_mbu
from qnnfault.model_io import build_arch, build_cnv, build_toy, count_susceptible_bits, synth_dataset
from qnnfault.qnn import (LayerSpec, accuracy, conv2d_forward, fully_connected_forward, maxpool2d,
                          network_loss, train)
from qnnfault.qnn.quant import (QuantTensor, hard_sigmoid, quantize_deterministic, quantize_stochastic,
                                quantize_tensor)
from qnnfault.stats import (ModelSpec, build_design_matrix, design_row, layer_drop_probability,
                            load_coefficients, ols_fit, predict)

FIXTURES = Path(__file__).parent / "fixtures"


def test_criterion_01_quantizers(report):
    t0 = time.perf_counter()
    unit = [quantize_deterministic(0.3) == 1, quantize_deterministic(0.0) == 1,
            quantize_deterministic(-0.0001) == -1, hard_sigmoid(0) == 0.5, hard_sigmoid(-3) == 0,
            hard_sigmoid(1) == 1,
            quantize_tensor([0.3, -0.2], 1).values.ravel().tolist() == [1, -1],
            quantize_tensor([0.6], 2).values.ravel().tolist() == [1],
            quantize_tensor([-1.7], 2).values.ravel().tolist() == [-2]]
    rng = np.random.default_rng(2024)
    worst = 0.0
    freq_ok = True
    for w in (-1.5, -0.5, 0.0, 0.5, 1.5):
        p = hard_sigmoid(w)
        n = 10_000
        frac = sum(quantize_stochastic(w, rng) == 1 for _ in range(n)) / n
        bound = 3 * np.sqrt(p * (1 - p) / n)
        freq_ok &= abs(frac - p) <= bound
        worst = max(worst, abs(frac - p) / bound if bound else abs(frac - p) * 1e9)
    elapsed = time.perf_counter() - t0
    ok = all(unit) and freq_ok and elapsed < 1.0
    report(1, ok, f"unit vectors {sum(unit)}/{len(unit)}, worst |freq-p| = {worst:.2f} sigma-bounds, "
                  f"{elapsed:.2f}s (< 1s)")
    assert ok


def _rand_qt(rng, dims, bw):
    vals = rng.choice([-1, 1], size=dims) if bw == 1 else rng.integers(-2, 2, size=dims)
    return QuantTensor.from_values(vals, bw, dims)


def test_criterion_02_forward_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    shapes = mismatches = 0
    for case in range(120):
        bw = 1 + case % 2
        c, o, k = int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.choice([1, 2, 3]))
        h, w = int(rng.integers(k, k + 6)), int(rng.integers(k, k + 6))
        x = _rand_qt(rng, (1, c, h, w), bw)
        wt = _rand_qt(rng, (o, c, k, k), bw)
        mismatches += not np.array_equal(conv2d_forward(x, wt, LayerSpec.conv(c, o, k, bw))[0],
                                         conv_direct(x.values[0], wt.values))
        p = int(rng.choice([1, 2]))
        xp = _rand_qt(rng, (1, c, p * int(rng.integers(1, 4)), p * int(rng.integers(1, 4))), bw)
        mismatches += not np.array_equal(maxpool2d(xp, LayerSpec.maxpool(p)).values[0],
                                         maxpool_direct(xp.values[0], p))
        fi, fo = int(rng.integers(1, 40)), int(rng.integers(1, 12))
        xf, wf = _rand_qt(rng, (1, fi, 1, 1), bw), _rand_qt(rng, (fo, fi, 1, 1), bw)
        mismatches += not np.array_equal(fully_connected_forward(xf, wf, LayerSpec.fc(fi, fo, bw)).ravel(),
                                         fc_direct(xf.values, wf.values.reshape(fo, fi)))
        shapes += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and shapes >= 100 and elapsed < 10
    report(2, ok, f"{shapes} random shapes x (conv, pool, fc), {mismatches} mismatches, {elapsed:.2f}s (< 10s)")
    assert ok


def test_criterion_03_bit_accounting(report):
    w1 = count_susceptible_bits(build_cnv(1, 1), "weight")
    w2 = count_susceptible_bits(build_cnv(2, 2), "weight")
    ok = (w1 == 1_542_848 and w2 == 3_085_696 and abs(w1 - 1.6e6) <= 0.1 * 1.6e6
          and abs(w2 - 3.2e6) <= 0.1 * 3.2e6 and w2 == 2 * w1)
    report(3, ok, f"cnvW1A1 {w1:,} bits ({(w1 / 1.6e6 - 1) * 100:+.1f}% vs 1.6M), "
                  f"cnvW2A2 {w2:,} ({(w2 / 3.2e6 - 1) * 100:+.1f}% vs 3.2M), ratio {w2 / w1:g}")
    assert ok


def _all_bits(net, domain):
    pool = net.params if domain == "weight" else net.activation_masks
    return np.concatenate([np.unpackbits(t.data, bitorder="little")[:t.nbits] for t in pool])


def test_criterion_04_involution_and_locality(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    net = build_toy(2, 2, rng)
    pristine = net.digest()
    spaces = {d: build_address_space(net, d) for d in ("weight", "activation")}
    refs = {d: _all_bits(net, d) for d in spaces}
    bad_locality = bad_restore = 0
    for k in range(10_000):
        domain = "weight" if k % 2 == 0 else "activation"
        space = spaces[domain]
        start = int(rng.integers(space.size))
        mbu = (k // 2) % 2 == 1
        op = inject_mbu if mbu else flip_bit
        op(net, space, start)
        stop = min(start + 8, space.size) if mbu else start + 1
        changed = np.flatnonzero(_all_bits(net, domain) != refs[domain])
        other = "activation" if domain == "weight" else "weight"
        bad_locality += (changed.tolist() != list(range(start, stop))
                         or not np.array_equal(_all_bits(net, other), refs[other]))
        op(net, space, start)
        bad_restore += net.digest() != pristine
    elapsed = time.perf_counter() - t0
    ok = bad_locality == 0 and bad_restore == 0 and elapsed < 5
    report(4, ok, f"10,000 SEU/MBU events: {bad_restore} failed restores, {bad_locality} locality "
                  f"violations, {elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_05_ols(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    factors = np.column_stack([rng.choice([1, 2], 2000), rng.choice([0, 1], 2000),
                               rng.choice([0, 1], 2000), rng.choice([1, 2, 5, 10, 20, 50, 100], 2000)])
    X = design_row(factors.astype(float))
    beta = rng.normal(0, 2, 16)
    noiseless = ols_fit(X[:400], X[:400] @ beta)
    err0 = float(np.max(np.abs(noiseless.coefficients - beta)))
    y = X @ beta + rng.normal(0, 0.1, 2000)
    fit = ols_fit(X, y)
    within = np.abs(fit.coefficients - beta) <= 5 * fit.std_errors
    b, se, t, r2, adj = ols_textbook(X, y)
    diffs = [np.max(np.abs(fit.std_errors - se) / se), np.max(np.abs(fit.t_values - t) / np.abs(t)),
             abs(fit.r2 - r2), abs(fit.adj_r2 - adj)]
    elapsed = time.perf_counter() - t0
    ok = err0 <= 1e-10 and within.all() and max(diffs) <= 1e-8 and elapsed < 5
    report(5, ok, f"noiseless max error {err0:.1e}, {int(within.sum())}/16 within 5 se, "
                  f"max oracle deviation {max(diffs):.1e}, {elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_06_prediction_fixture(report):
    fit = load_coefficients(FIXTURES / "reference_coefficients.csv")
    ref = predict(fit, [0, 0, 0, 0])
    x1 = predict(fit, [1, 0, 0, 0])
    ok = abs(ref - 74.76) <= 1e-9 and abs(x1 - 80.13) <= 1e-9
    report(6, ok, f"all-reference cell {ref:.2f}, X1=1 cell {x1:.2f}")
    assert ok


def test_criterion_07_degradation_trend(report):
    t0 = time.perf_counter()
    counts = (1, 2, 5, 10, 20, 50, 100)
    net = build_toy(1, 1, np.random.default_rng(0))
    train_set = synth_dataset(2000, rng=np.random.default_rng([0, 0]))
    result = train(net, train_set, 40, 0.005, np.random.default_rng(0))
    train_acc = accuracy(result.net, train_set)
    evalset = synth_dataset(200, rng=np.random.default_rng([0, 1]))
    means, worst = {}, {}
    for mode in ("SEU", "MBU"):
        for n in counts:
            s = summarize(run_scenario(result.net, evalset, ScenarioConfig(1, 1, mode, "weight", 0, n, 200, 200)))
            means[mode, n], worst[mode, n] = s["mean_drop"], s["max_drop"]
    rho = {m: spearmanr(counts, [means[m, n] for n in counts])[0] for m in ("SEU", "MBU")}
    a = train_acc >= 95 and all(rho[m] >= 0.9 for m in rho)
    b = means["MBU", 100] >= means["SEU", 100]
    c = worst["MBU", 100] >= 2 * means["MBU", 100]
    elapsed = time.perf_counter() - t0
    ok = a and b and c and elapsed < 600
    report(7, ok, f"train acc {train_acc:.1f}%, rho SEU {rho['SEU']:.3f} / MBU {rho['MBU']:.3f}, "
                  f"mean drop @100 SEU {means['SEU', 100]:.2f} <= MBU {means['MBU', 100]:.2f}, "
                  f"MBU worst {worst['MBU', 100]:.1f} vs 2x mean {2 * means['MBU', 100]:.2f}, {elapsed:.0f}s")
    assert ok


def test_criterion_08_in_layer_pipeline(report):
    nets = {}
    train_set = synth_dataset(1000, rng=np.random.default_rng([1, 0]), image_shape=(3, 32, 32))
    for bits in (1, 2):
        net = build_arch(f"cnvW{bits}A{bits}-small", np.random.default_rng(bits))
        nets[bits, bits] = train(net, train_set, 10, 0.005, np.random.default_rng(bits)).net
    evalset = synth_dataset(100, rng=np.random.default_rng([1, 1]), image_shape=(3, 32, 32))
    configs = in_layer_grid(trials=10, batch_size=100)
    configs += in_layer_grid(counts=(0,), trials=2, batch_size=100)
    table = run_grid(nets, evalset, configs)
    grid = layer_drop_probability(table, 1.0, counts=[0, 5, 10, 50, 100])
    main = grid.prob[:, 1:]
    faulty = table.where()
    faulty.records = [r for r in table.records if r.n_faults > 0]
    X, y = build_design_matrix(faulty, ModelSpec("in-layer"))
    fit = ols_fit(X, y)
    ok = (main.shape == (9, 4) and not grid.empty.any() and np.all((main >= 0) & (main <= 1))
          and np.all(grid.prob[:, 0] == 0) and np.isfinite(fit.adj_r2) and fit.adj_r2 <= fit.r2)
    report(8, ok, f"heatmap {main.shape[0]}x{main.shape[1]} in [{main.min():.2f}, {main.max():.2f}], "
                  f"n=0 column max {grid.prob[:, 0].max():.1f}, in-layer R2 {fit.r2:.3f} "
                  f"adjR2 {fit.adj_r2:.3f} (n={fit.n})")
    assert ok


def test_criterion_09_bit_search_attack(report):
    t0 = time.perf_counter()
    net = small_conv_net(np.random.default_rng(9))
    ds = synth_dataset(32, rng=np.random.default_rng(9))
    space = build_address_space(net)
    best_bit, best = None, network_loss(net, ds.images, ds.labels)
    probe = net.copy()
    for b in range(space.size):
        flip_bit(probe, space, b)
        v = network_loss(probe, ds.images, ds.labels)
        flip_bit(probe, space, b)
        if v > best:
            best_bit, best = b, v
    one = bit_search_attack(net, ds, 1)
    ten = bit_search_attack(net, ds, 10)
    monotone = all(b >= a for a, b in zip(ten.loss_trace, ten.loss_trace[1:]))
    elapsed = time.perf_counter() - t0
    ok = space.size <= 4096 and one.flips == [best_bit] and monotone and elapsed < 60
    report(9, ok, f"{space.size}-bit net: greedy flip {one.flips} vs exhaustive [{best_bit}], "
                  f"budget-10 trace monotone={monotone}, loss {ten.loss_trace[0]:.3f}->{ten.loss_trace[-1]:.3f}, "
                  f"{elapsed:.1f}s (< 60s)")
    assert ok


def _pipeline(workdir: Path, threads: int) -> dict:
    workdir.mkdir()
    cwd = os.getcwd()
    os.chdir(workdir)
    try:
        for bits in (1, 2):
            arch = f"toyW{bits}A{bits}"
            assert cli.main(["train", "--arch", arch, "--synthetic", "--images", "500", "--epochs", "8",
                             "--seed", "3", "--out", f"{arch}.qnfw"]) == 0
            assert cli.main(["campaign", "--arch", arch, "--weights", f"{arch}.qnfw", "--synthetic",
                             "--images", "100", "--mode", "seu,mbu", "--layer", "1,2,3",
                             "--faults", "5,10,50,100", "--trials", "12", "--seed", "11",
                             "--threads", str(threads), "--out", f"{arch}.csv"]) == 0
        assert cli.main(["fit", "--results", "toyW1A1.csv", "toyW2A2.csv", "--model", "in-layer",
                         "--out", "coef.csv"]) == 0
        assert cli.main(["heatmap", "--results", "toyW1A1.csv", "toyW2A2.csv", "--threshold", "1.0",
                         "--out", "heat.csv", "--svg", "heat.svg"]) == 0
    finally:
        os.chdir(cwd)
    names = ["toyW1A1.qnfw", "toyW2A2.qnfw", "toyW1A1.csv", "toyW2A2.csv", "coef.csv", "heat.csv", "heat.svg"]
    return {n: (workdir / n).read_bytes() for n in names}


def test_criterion_10_reproducibility(report, tmp_path):
    first = _pipeline(tmp_path / "run1", threads=8)
    second = _pipeline(tmp_path / "run2", threads=8)
    single = _pipeline(tmp_path / "run3", threads=1)
    same_runs = [n for n in first if first[n] == second[n]]
    same_threads = [n for n in first if first[n] == single[n]]
    ok = len(same_runs) == len(first) and len(same_threads) == len(first)
    report(10, ok, f"{len(same_runs)}/{len(first)} outputs identical across runs, "
                   f"{len(same_threads)}/{len(first)} identical for --threads 8 vs 1")
    assert ok
