"""``qnnfault`` command line: train, info, campaign, fit, predict, heatmap, attack.

Exit codes: 0 success, 2 usage, 3 data/schema error, 4 numerical error.
Every command that writes ``--out PATH`` also writes ``PATH.meta.json`` with
the fully resolved arguments.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .campaign import ScenarioConfig, load_many, run_grid, save_results, summarize
from .errors import DataError, InvalidValueError, NumericalError, QnnFaultError, ShapeError
from .faults.attack import AttackBudget, bit_search_attack
from .model_io.datasets import load_cifar10, synth_dataset
from .model_io.topology import build_arch, count_susceptible_bits
from .model_io.weightfile import load_weights, save_weights
from .qnn.network import accuracy
from .qnn.train import train
from .stats.design import ModelSpec, build_design_matrix
from .stats.heatmap import ENTROPY_NOTE, layer_drop_probability, layer_entropy_score, render_svg, save_heatmap
from .stats.ols import coefficient_report, load_coefficients, ols_fit, predict, save_coefficients

ARCHS = ("cnvW1A1", "cnvW2A2", "toy", "toyW1A1", "toyW2A2", "cnvW1A1-small", "cnvW2A2-small")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _choice_list(choices):
    def parse(text):
        items = [v.strip().lower() for v in text.split(",") if v.strip()]
        bad = [v for v in items if v not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"invalid choice(s) {bad or text!r}; expected {', '.join(choices)}")
        return items
    return parse


def _write_meta(out: str, command: str, args: argparse.Namespace, extra: dict | None = None) -> None:
    meta = {"command": command, "version": __version__,
            "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}}
    if extra:
        meta.update(extra)
    with open(out + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _dataset(args, image_shape, split: int, default_n: int):
    n = args.images or default_n
    if args.dataset:
        ds = load_cifar10(args.dataset, n)
    else:
        ds = synth_dataset(n, 10, np.random.default_rng([args.data_seed, split]), image_shape)
    if ds.image_shape != tuple(image_shape):
        raise ShapeError(f"dataset images {ds.image_shape} do not match network input {tuple(image_shape)}")
    return ds


def _add_data_flags(p, default_images=None):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--dataset", metavar="PATH", help="CIFAR-10 binary batch file")
    src.add_argument("--synthetic", action="store_true", help="use the synthetic blob dataset")
    p.add_argument("--images", type=int, default=default_images, metavar="K")
    p.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic dataset")


def cmd_train(args) -> int:
    net = build_arch(args.arch, np.random.default_rng(args.seed))
    ds = _dataset(args, net.input_shape, 0, 2000)
    rng = np.random.default_rng(args.seed)
    result = train(net, ds, args.epochs, args.lr, rng, batch_size=args.batch_size)
    save_weights(result.net, args.out)
    with open(args.out + ".log.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_acc"])
        for e, (lv, acc) in enumerate(zip(result.loss_history, result.accuracy_history), start=1):
            w.writerow([e, repr(lv), repr(acc)])
    train_acc = accuracy(result.net, ds)
    val_acc = None
    if args.synthetic:
        val = synth_dataset(min(len(ds), 1000), 10, np.random.default_rng([args.data_seed, 1]), net.input_shape)
        val_acc = accuracy(result.net, val)
    print(f"train accuracy {train_acc:.2f}%" + (f", validation accuracy {val_acc:.2f}%" if val_acc is not None else ""))
    _write_meta(args.out, "train", args, {"train_acc": train_acc, "val_acc": val_acc})
    return 0


def cmd_info(args) -> int:
    net = load_weights(args.weights) if args.weights else build_arch(args.arch)
    print(f"{net.name}: input {net.input_shape}, {net.conv_layer_count} conv layers")
    number = {li: k + 1 for k, li in enumerate(net.param_layers)}
    for i, (spec, shape) in enumerate(zip(net.layers, net.shapes)):
        tag = f"L{number[i]}" if i in number else "  "
        print(f"  {i:2d} {tag:>3} {spec.kind.name:<17} -> {shape}")
    print(f"weight bits:     {count_susceptible_bits(net, 'weight'):,}")
    print(f"activation bits: {count_susceptible_bits(net, 'activation'):,}")
    return 0


def cmd_campaign(args) -> int:
    net = load_weights(args.weights)
    if args.arch:
        ref = build_arch(args.arch)
        if [(s.kind, s.weight_dims if s.has_weights else None) for s in ref.layers] != \
                [(s.kind, s.weight_dims if s.has_weights else None) for s in net.layers] or \
                (ref.weight_bits, ref.activation_bits) != (net.weight_bits, net.activation_bits):
            raise DataError(f"weights in {args.weights} do not match architecture {args.arch}")
    ds = _dataset(args, net.input_shape, 1, 1000)
    wb, ab = net.weight_bits, net.activation_bits
    configs = [ScenarioConfig(wb, ab, m, d, layer, n, args.trials, len(ds), args.seed)
               for m in args.mode for d in args.domain for layer in args.layer for n in args.faults]
    table = run_grid({(wb, ab): net}, ds, configs, threads=args.threads)
    save_results(table, args.out)
    summaries = {}
    for c in configs:
        s = summarize(table.where(scenario_id=c.scenario_id))
        summaries[c.scenario_id] = s
        print(f"{c.scenario_id}: mean acc {s['mean_acc']:.2f}%, mean drop {s['mean_drop']:.3f}, "
              f"worst drop {s['max_drop']:.2f}")
    _write_meta(args.out, "campaign", args, {"rows": len(table)})
    return 0


def _family(table, requested):
    if requested:
        return requested
    layers = set(table.column("layer").tolist())
    if layers == {0}:
        return "across"
    if 0 not in layers:
        return "in-layer"
    raise DataError("results mix whole-network and in-layer rows; pass --model")


def cmd_fit(args) -> int:
    table = load_many(args.results)
    spec = ModelSpec(_family(table, args.model))
    X, y = build_design_matrix(table, spec)
    fit = ols_fit(X, y)
    save_coefficients(fit, args.out)
    print(coefficient_report(fit))
    _write_meta(args.out, "fit", args, {"model": spec.kind, "r2": fit.r2, "adj_r2": fit.adj_r2,
                                        "n": fit.n, "dof": fit.dof})
    return 0


def cmd_predict(args) -> int:
    fit = load_coefficients(args.coefficients)
    if args.factors is not None:
        if len(args.factors) != 4:
            raise UsageError("--factors needs exactly four values")
        factors = args.factors
    else:
        if not (args.arch and args.mode and args.faults is not None):
            raise UsageError("give --factors or all of --arch, --mode, --faults and --domain/--layer")
        net = build_arch(args.arch)
        if args.layer:
            spec, scope = ModelSpec("in-layer"), args.layer
        else:
            spec, scope = ModelSpec("across"), args.domain or "weight"
        factors = spec.encode(net.weight_bits, args.mode, scope, args.faults)
    value = predict(fit, factors)
    print(f"{value!r}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(f"{value!r}\n")
        _write_meta(args.out, "predict", args, {"factors": list(map(float, factors))})
    return 0


def cmd_heatmap(args) -> int:
    table = load_many(args.results)
    wbits = build_arch(args.arch).weight_bits if args.arch else None
    grid = layer_drop_probability(table, args.threshold, wbits=wbits, mode=args.mode)
    save_heatmap(grid, args.out)
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(render_svg(grid, f"P(drop > {args.threshold:g} pt)"))
    scores = layer_entropy_score(grid)
    for layer, h, p in zip(scores.layers, scores.entropy, scores.mean_drop_prob):
        print(f"L{layer}: mean drop probability {p:.3f}, entropy score {h:.3f}")
    _write_meta(args.out, "heatmap", args, {
        "entropy_definition": ENTROPY_NOTE, "ranking": scores.ranking,
        "entropy": [float(v) for v in scores.entropy], "empty_cells": int(grid.empty.sum())})
    return 0


def cmd_attack(args) -> int:
    if args.budget < 1:
        raise UsageError("--budget must be at least 1")
    net = load_weights(args.weights)
    ds = _dataset(args, net.input_shape, 1, 64)
    result = bit_search_attack(net, ds, AttackBudget(args.budget), np.random.default_rng(args.seed),
                               sample_size=args.sample)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "bit_index", "loss"])
        w.writerow([0, "", repr(result.loss_trace[0])])
        for k, (bit, lv) in enumerate(zip(result.flips, result.loss_trace[1:]), start=1):
            w.writerow([k, bit, repr(lv)])
    print(f"{len(result.flips)} flips, loss {result.loss_trace[0]:.4f} -> {result.loss_trace[-1]:.4f}")
    _write_meta(args.out, "attack", args, {"flips": len(result.flips)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnnfault", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network and write a QNFW weight file")
    p.add_argument("--arch", required=True, choices=ARCHS)
    _add_data_flags(p)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("info", help="show topology and susceptible bit counts")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--arch", choices=ARCHS)
    g.add_argument("--weights")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("campaign", help="run fault-injection scenarios, write results CSV")
    p.add_argument("--arch", choices=ARCHS)
    p.add_argument("--weights", required=True)
    _add_data_flags(p, default_images=1000)
    p.add_argument("--mode", type=_choice_list(("seu", "mbu")), required=True)
    p.add_argument("--domain", type=_choice_list(("weight", "activation")), default=["weight"])
    p.add_argument("--layer", type=_int_list, default=[0], help="layer number(s) 1..9; 0 = whole network")
    p.add_argument("--faults", type=_int_list, required=True)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("fit", help="fit the factorial regression model")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--model", choices=("across", "in-layer"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a fitted model at one factor setting")
    p.add_argument("--coefficients", required=True)
    p.add_argument("--factors", type=_float_list, help="encoded x1,x2,x3,x4")
    p.add_argument("--arch", choices=ARCHS)
    p.add_argument("--mode", choices=("seu", "mbu"))
    p.add_argument("--domain", choices=("weight", "activation"))
    p.add_argument("--layer", type=int)
    p.add_argument("--faults", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("heatmap", help="per-layer drop probability grid and entropy scores")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=1.0)
    p.add_argument("--arch", choices=ARCHS)
    p.add_argument("--mode", choices=("seu", "mbu"))
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("attack", help="greedy bit-search attack on the weights")
    p.add_argument("--weights", required=True)
    _add_data_flags(p, default_images=64)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--sample", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InvalidValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"qnnfault {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"qnnfault {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (QnnFaultError, OSError) as exc:
        print(f"qnnfault {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
