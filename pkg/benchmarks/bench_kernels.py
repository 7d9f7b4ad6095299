"""Benchmark the compiled kernel core against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N] [--scale small|full]

Times each hot kernel on both backends and prints a markdown table with
the speedup of the compiled extension. The convolution family is BLAS-fed
on the fallback side, so the interesting wins are the scalar-loop kernels
(component labeling, chamfer distance) that NumPy cannot vectorize.
"""

import argparse
import time

import numpy as np

from lungseg import backend
from lungseg.rng import SplitMix64


def _timeit(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(scale: str):
    rng = SplitMix64(0xBE7C)
    if scale == "full":
        n, c, o, s = 4, 16, 16, 128
        side = 1024
    else:
        n, c, o, s = 2, 8, 8, 64
        side = 256
    x = (rng.uniform(n * c * s * s).reshape(n, c, s, s) - 0.5).astype(np.float32)
    w = (rng.uniform(o * c * 9).reshape(o, c, 3, 3) - 0.5).astype(np.float32)
    gy = (rng.uniform(n * o * s * s).reshape(n, o, s, s) - 0.5).astype(np.float32)
    mask = rng.uniform(side * side).reshape(side, side) < 0.55

    _, idx = backend.active.maxpool2_forward(x)
    gp = (rng.uniform(idx.size).reshape(idx.shape) - 0.5).astype(np.float32)

    return [
        (f"conv2d_forward {n}x{c}x{s}x{s} -> {o}ch",
         lambda: backend.active.conv2d_forward(x, w, 1)),
        (f"conv2d_backward_input {n}x{o}x{s}x{s}",
         lambda: backend.active.conv2d_backward_input(gy, w, 1, s, s)),
        (f"conv2d_backward_weight {n}x{o}x{s}x{s}",
         lambda: backend.active.conv2d_backward_weight(gy, x, 1, 3, 3)),
        (f"maxpool2_forward {n}x{c}x{s}x{s}",
         lambda: backend.active.maxpool2_forward(x)),
        (f"maxpool2_backward {n}x{c}x{s // 2}x{s // 2}",
         lambda: backend.active.maxpool2_backward(gp, idx)),
        (f"label_components {side}x{side} conn8",
         lambda: backend.active.label_components(mask, 8)),
        (f"chamfer_l1 {side}x{side}",
         lambda: backend.active.chamfer_l1(mask)),
    ]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repeats per kernel (best is kept)")
    parser.add_argument("--scale", choices=["small", "full"], default="full")
    args = parser.parse_args(argv)

    names = backend.available()
    if "compiled" not in names:
        print("compiled extension not built; nothing to compare")
        return 1

    rows = []
    for label, fn in _cases(args.scale):
        timings = {}
        for bname in ("fallback", "compiled"):
            prev = backend.set_backend(bname)
            try:
                fn()  # warm up caches and lazy allocations
                timings[bname] = _timeit(fn, args.repeats)
            finally:
                backend.active = prev
        rows.append((label, timings["fallback"], timings["compiled"]))

    print("| kernel | fallback (ms) | compiled (ms) | speedup |")
    print("| --- | --- | --- | --- |")
    for label, tf, tc in rows:
        print(f"| {label} | {1e3 * tf:.3f} | {1e3 * tc:.3f} | "
              f"{tf / tc:.2f}x |")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
