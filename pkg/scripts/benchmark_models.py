"""Parameter, FLOP, and single-thread latency report for both variants.

Usage:
    python scripts/benchmark_models.py --n-points 1024 --passes 1000
"""

import argparse
import statistics
import sys
import time

import numpy as np

from rbfpoint.model import ChannelSpec, ModelSpec, build, count_flops


def bench(variant: str, n_points: int, passes: int, warmup: int):
    spec = ModelSpec(variant=variant, channels=[ChannelSpec(m=300)])
    net = build(spec, rng_seed=0)
    params = net.count_params()
    flops = count_flops(spec, n_points)
    sample = np.random.default_rng(0).random((1, n_points, 3)) * 2 - 1
    for _ in range(warmup):
        net.forward(sample, train=False)
    timings = []
    for _ in range(passes):
        start = time.perf_counter()
        net.forward(sample, train=False)
        timings.append(time.perf_counter() - start)
    return params, flops, statistics.median(timings)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-points", type=int, default=1024)
    parser.add_argument("--passes", type=int, default=1000)
    parser.add_argument("--warmup", type=int, default=100)
    args = parser.parse_args(argv)

    for variant in ("vanilla", "enhanced"):
        params, flops, median = bench(
            variant, args.n_points, args.passes, args.warmup
        )
        print(f"== {variant} (M=300, N={args.n_points}) ==")
        print(f"  parameters   {params['total']:>12,}")
        print(f"  FLOPs/sample {flops['total']:>12,}")
        print(f"  latency      {median * 1e3:>12.3f} ms/sample (median)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
