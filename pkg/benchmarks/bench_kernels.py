"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--size 128] [--repeat 5]

Prints one row per kernel with the best-of-N wall time for each backend,
the speedup, and the max absolute difference between the two outputs.
"""
import argparse
import timeit

import numpy as np

from angiointerp import _backend


def _cases(size, rng):
    h = w = size
    flow = rng.normal(0, 3, (h, w, 2))
    depth = rng.uniform(0.5, 5, (h, w))
    src = rng.random((h, w))
    ker = rng.random((h, w, 16)) + 0.05
    ker /= ker.sum(-1, keepdims=True)
    up = rng.normal(size=(h, w))
    ix, iy, it = (rng.normal(0, 10, (h, w)) for _ in range(3))
    zeros = np.zeros((h, w))
    return {
        "project_scatter": lambda k: k.project_scatter(flow, depth, 0.5),
        "warp_forward": lambda k: k.warp_forward(src, flow, ker, 4),
        "warp_backward": lambda k: k.warp_backward(src, flow, ker, 4, up),
        "hs_iterate x50": lambda k: k.hs_iterate(ix, iy, it, zeros, zeros, 100.0, 50),
    }


def _max_diff(a, b):
    if isinstance(a, tuple):
        return max(_max_diff(x, y) for x, y in zip(a, b))
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).max())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled extension not built; only the numpy fallback is available")
    cases = _cases(args.size, np.random.default_rng(0))
    print(f"{args.size}x{args.size}, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{n + ' ms':>12}" for n in names) + f"{'speedup':>10}{'max diff':>11}")
    for label, fn in cases.items():
        times, outs = [], []
        for name in names:
            kern = _backend.get(name)
            outs.append(fn(kern))
            times.append(min(timeit.repeat(lambda: fn(kern), number=1, repeat=args.repeat)))
        row = f"{label:<16}" + "".join(f"{t * 1e3:>12.2f}" for t in times)
        if len(names) == 2:
            row += f"{times[1] / times[0]:>9.1f}x{_max_diff(*outs):>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
