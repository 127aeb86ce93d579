"""Corruption-robustness sweep over a trained checkpoint.

Evaluates a checkpoint on the test split of its experiment config under
point dropout and coordinate noise, printing one accuracy row per level.

Usage:
    python scripts/robustness_sweep.py runs/mnist-small/checkpoint.ckpt \
        --config runs/mnist-small/config.cfg
"""

import argparse
import sys

from rbfpoint import run
from rbfpoint.config import load_config

DROPOUT_LEVELS = (0.0, 0.25, 0.5, 0.75, 0.9)
NOISE_LEVELS = (0.01, 0.02, 0.05, 0.1)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("checkpoint")
    parser.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    cfg = load_config(args.config)
    _, test = run.load_datasets(cfg)
    corruptions = [("dropout", f) for f in DROPOUT_LEVELS if f > 0]
    corruptions += [("noise", s) for s in NOISE_LEVELS]
    rows = run.eval_checkpoint(args.checkpoint, test, corruptions, seed=cfg.seed)
    clean = run.eval_checkpoint(args.checkpoint, test, seed=cfg.seed)

    print(f"{'corruption':<16} {'instance':>10} {'class':>10}")
    for label, instance, per_class in clean + rows:
        print(f"{label:<16} {instance:>10.4f} {per_class:>10.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
