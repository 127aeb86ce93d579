"""Command-line front end: train / eval / benchmark / kernels / preset."""

from __future__ import annotations

import argparse
import dataclasses
import os
import statistics
import sys
import time

import numpy as np

from . import presets, run
from .config import load_config
from .model import Network, build, count_flops
from .nn import ParameterError
from .rbf import dump_kernels

PAPER_REFERENCE = (
    "reference (full-scale): vanilla 2.2M params / 24M FLOPs, "
    "enhanced 3.2M params / 218M FLOPs; desk-scale totals below use a "
    "[512, 256] classifier head and are expected to differ."
)


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    try:
        net, history = run.run_training(cfg, log=print)
    except run.MissingDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    final = history[-1]
    print(
        f"done: {cfg.epochs} epochs, final train acc {final.train_acc:.4f}, "
        f"test acc {final.test_acc_instance:.4f} "
        f"(checkpoint + metrics in {cfg.out_dir})"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    try:
        _, test = run.load_datasets(cfg)
    except run.MissingDataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    corruptions = [run.parse_corruption(c) for c in args.corrupt]
    rows = run.eval_checkpoint(args.checkpoint, test, corruptions, seed=cfg.seed)
    print(f"{'corruption':<16} {'instance':>10} {'class':>10}")
    for label, instance, per_class in rows:
        print(f"{label:<16} {instance:>10.4f} {per_class:>10.4f}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_cfg(args)
    spec = cfg.model_spec()
    net = build(spec, rng_seed=cfg.seed)
    params = net.count_params()
    flops = count_flops(spec, args.n_points)
    print(PAPER_REFERENCE)
    print(f"model: {cfg.variant}, M={cfg.m}, N={args.n_points}, d={spec.input_dim}")
    print("parameters:")
    for key, value in params.items():
        print(f"  {key:<12} {value:>12,}")
    print("FLOPs/sample:")
    for key, value in flops.items():
        print(f"  {key:<12} {value:>12,}")
    sample = np.random.default_rng(cfg.seed).random((1, args.n_points, spec.input_dim)) * 2 - 1
    for _ in range(args.warmup):
        net.forward(sample, train=False)
    timings = []
    for _ in range(args.passes):
        start = time.perf_counter()
        net.forward(sample, train=False)
        timings.append(time.perf_counter() - start)
    print(f"inference: {statistics.median(timings) * 1e3:.4f} ms/sample "
          f"(median of {args.passes} passes, {args.warmup} warm-up)")
    return 0


def cmd_kernels(args) -> int:
    net = Network.load(args.checkpoint)
    if net.mc_rbf is None:
        print("error: checkpointed model has no RBF layer", file=sys.stderr)
        return 1
    dump_kernels(net.mc_rbf, args.out)
    n = sum(ch.m for ch in net.mc_rbf.channels)
    print(f"wrote {n} kernels to {args.out}")
    return 0


def cmd_preset(args) -> int:
    configs = presets.expand_preset(args.name)
    os.makedirs(args.out, exist_ok=True)
    rebased = []
    for cfg in configs:
        cfg = dataclasses.replace(cfg, out_dir=os.path.join(args.out, cfg.name))
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        rebased.append(cfg)
        path = os.path.join(args.out, f"{cfg.name}.cfg")
        with open(path, "w", encoding="utf-8") as f:
            f.write(cfg.serialize())
        print(f"wrote {path}")
    if args.run:
        results = []
        for cfg in rebased:
            try:
                _, history = run.run_training(cfg, log=print)
            except run.MissingDataError as e:
                print(f"error: {e}", file=sys.stderr)
                return 2
            results.append(history[-1])
        summary = os.path.join(args.out, "summary.csv")
        presets.write_summary(rebased, results, summary)
        print(f"wrote {summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbfpoint",
        description="Point-cloud classification with a trainable RBF feature layer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")

    p_train = sub.add_parser("train", help="train a model from a config")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("checkpoint")
    p_eval.add_argument(
        "--corrupt",
        action="append",
        default=[],
        metavar="dropout:F|noise:STD",
        help="test-time corruption; may be repeated for a sweep",
    )
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("benchmark", help="parameter/FLOP/latency report")
    common(p_bench)
    p_bench.add_argument("--n-points", type=int, default=1024)
    p_bench.add_argument("--passes", type=int, default=1000)
    p_bench.add_argument("--warmup", type=int, default=100)
    p_bench.set_defaults(func=cmd_benchmark)

    p_kernels = sub.add_parser("kernels", help="dump kernel centers/sizes to CSV")
    p_kernels.add_argument("checkpoint")
    p_kernels.add_argument("--out", required=True, help="CSV output path")
    p_kernels.set_defaults(func=cmd_kernels)

    p_preset = sub.add_parser("preset", help="expand (and optionally run) an experiment preset")
    p_preset.add_argument("name", help=f"one of {sorted(presets.PRESETS)}")
    p_preset.add_argument("--out", required=True, help="directory for configs and runs")
    p_preset.add_argument("--seed", type=int, default=None)
    p_preset.add_argument("--run", action="store_true", help="run every expanded config")
    p_preset.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
