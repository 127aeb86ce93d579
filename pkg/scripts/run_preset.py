"""Expand a canned experiment preset and run every config in it.

Usage:
    python scripts/run_preset.py overfit32 --out runs/overfit32
    python scripts/run_preset.py kernel-type --out runs/ktype --seed 1
"""

import argparse
import dataclasses
import os
import sys

from rbfpoint import presets, run


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("name", choices=sorted(presets.PRESETS))
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    configs = presets.expand_preset(args.name)
    results = []
    rebased = []
    for cfg in configs:
        cfg = dataclasses.replace(cfg, out_dir=os.path.join(args.out, cfg.name))
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        rebased.append(cfg)
        _, history = run.run_training(cfg, log=print)
        results.append(history[-1])
    summary = os.path.join(args.out, "summary.csv")
    presets.write_summary(rebased, results, summary)
    print(f"wrote {summary}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
