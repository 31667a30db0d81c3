"""Throughput comparison of the compiled and numpy kernel backends.

Times the dilated convolution (forward and backward) at training-batch
shapes and the sliding-window mean at feature-normalization shapes, then
prints one table row per workload.  Each timing is the best of --repeats
runs to suppress scheduler noise.

Usage:
    python benchmarks/bench_kernels.py [--repeats 5] [--batch 32]
        [--frames 400] [--channels 64]
"""

import argparse
import time

import numpy as np

from ctsforge.kernels import reference

try:
    from ctsforge.kernels import _fastops
except ImportError:
    _fastops = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def build_workloads(args):
    rng = np.random.default_rng(0)
    batch, frames, channels = args.batch, args.frames, args.channels
    x = rng.standard_normal((batch, frames, channels))
    w = rng.standard_normal((3, channels, channels))
    bias = rng.standard_normal(channels)
    t_out = frames - 2 * 3
    grad_out = rng.standard_normal((batch, t_out, channels))
    feats = rng.standard_normal((6000, channels))

    workloads = [
        (f"conv1d_forward  ({batch}x{frames}x{channels}, k=3, d=3)",
         lambda impl: impl.conv1d_forward(x, w, bias, 3)),
        (f"conv1d_backward ({batch}x{frames}x{channels}, k=3, d=3)",
         lambda impl: impl.conv1d_backward(x, w, 3, grad_out)),
        (f"sliding_mean    (6000x{channels}, window=301)",
         lambda impl: impl.sliding_window_mean(feats, 301)),
    ]
    return workloads


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Benchmark compiled vs numpy kernel implementations.")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per workload (best kept)")
    parser.add_argument("--batch", type=int, default=32,
                        help="convolution batch size")
    parser.add_argument("--frames", type=int, default=400,
                        help="frames per chunk")
    parser.add_argument("--channels", type=int, default=64,
                        help="channel / feature width")
    args = parser.parse_args(argv)

    if _fastops is None:
        print("compiled extension not built; timing the numpy backend only")

    header = f"{'workload':<44}{'numpy [ms]':>12}"
    if _fastops is not None:
        header += f"{'compiled [ms]':>15}{'speedup':>9}"
    print(header)
    for name, call in build_workloads(args):
        t_ref = best_of(lambda: call(reference), args.repeats)
        row = f"{name:<44}{1e3 * t_ref:>12.2f}"
        if _fastops is not None:
            t_fast = best_of(lambda: call(_fastops), args.repeats)
            row += f"{1e3 * t_fast:>15.2f}{t_ref / t_fast:>9.2f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
