#!/usr/bin/env python3
"""Benchmarks the compiled conv kernels against the NumPy fallback.

Reports the full BMNet-Tiny forward pass per backend plus a per-shape
table (dense, depthwise, pointwise) that motivates the hybrid dispatch:
BLAS-backed im2col wins dense GEMM shapes, the compiled direct loop wins
grouped/depthwise ones.

Usage: python benchmarks/bench_forward.py [--iters 300] [--seed 0]
"""

import argparse
import statistics
import time

import numpy as np

from breakable_machine.nn import bmnet_tiny
from breakable_machine.nn.kernels import BACKEND, implementations


def forward_with(impl, model, x):
    a = x
    for ly in model.backbone:
        if ly.kind == "conv2d":
            a = impl.conv2d(a, ly.weight, ly.bias, ly.stride, ly.padding, ly.groups)
        else:
            a = impl.relu6(a)
    pooled = impl.global_avg_pool(np.ascontiguousarray(a))
    return model.head_weights @ pooled + model.head_bias


def median_ms(fn, iters):
    fn()
    fn()
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e3


CONV_CASES = {
    "dense 3x3 s2 (3->8, 56px)": ((3, 56, 56), (8, 3, 3, 3), 2, 1, 1),
    "dense 3x3 s2 (16->32, 14px)": ((16, 14, 14), (32, 16, 3, 3), 2, 1, 1),
    "depthwise 3x3 (32ch, 56px)": ((32, 56, 56), (32, 1, 3, 3), 1, 1, 32),
    "depthwise 3x3 (96ch, 28px)": ((96, 28, 28), (96, 1, 3, 3), 1, 1, 96),
    "pointwise 1x1 (32->64, 28px)": ((32, 28, 28), (64, 32, 1, 1), 1, 0, 1),
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iters", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    impls = implementations()
    rng = np.random.default_rng(args.seed)

    model = bmnet_tiny(["a", "b", "c", "d"], seed=args.seed)
    inputs = [rng.uniform(-1, 1, (3, 56, 56)).astype(np.float32) for _ in range(8)]
    it = iter(range(10**9))
    print(f"active dispatch: {BACKEND}")
    print(f"BMNet-Tiny full forward (56x56 -> 32x7x7), {args.iters} iters per backend:")
    results = {}
    for name, impl in impls.items():
        ms = median_ms(lambda impl=impl: forward_with(impl, model, inputs[next(it) % 8]),
                       args.iters)
        results[name] = ms
        print(f"  {name:9s} {ms:7.3f} ms/frame")
    if len(results) == 2:
        print(f"  python/compiled ratio: {results['python'] / results['compiled']:.2f}x")

    print("\nper-shape conv2d medians:")
    for case, (xs, ws, stride, pad, groups) in CONV_CASES.items():
        x = rng.uniform(-1, 1, xs).astype(np.float32)
        w = rng.normal(0, 0.1, ws).astype(np.float32)
        b = rng.normal(0, 0.1, ws[0]).astype(np.float32)
        row = f"  {case:30s}"
        for name, impl in impls.items():
            ms = median_ms(lambda impl=impl: impl.conv2d(x, w, b, stride, pad, groups),
                           max(50, args.iters // 3))
            row += f" {name}: {ms:7.3f} ms "
        print(row)

    logits = {name: forward_with(impl, model, inputs[0]) for name, impl in impls.items()}
    vals = list(logits.values())
    worst = max(float(np.abs(vals[0] - v).max()) for v in vals[1:]) if len(vals) > 1 else 0.0
    print(f"\nmax |logit delta| across backends: {worst:.2e}")


if __name__ == "__main__":
    main()
