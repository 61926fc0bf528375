"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once before timing so numba compilation is excluded.
The active backend used by the package is chosen by HSR_ZERMELO_NUMBA.
"""
import argparse
import timeit

import numpy as np

from hsr_zermelo import kernels


def cases(rng):
    for width in (2, 23, 129):
        q = rng.uniform(-1, 1, width)
        prior = rng.dirichlet(np.ones(width))
        visits = rng.integers(0, 30, width).astype(float)
        yield f"puct_select width={width}", (
            lambda: kernels.puct_select_numpy(q, prior, visits, 1.0, False),
            lambda: kernels.puct_select_numba(q, prior, visits, 1.0, False))
    for batch, cin, cout in ((1, 1, 16), (64, 16, 16)):
        x = rng.normal(size=(batch, 5, cin)).astype(np.float32)
        w = rng.normal(size=(3, cin, cout)).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        dout = rng.normal(size=(batch, 5, cout)).astype(np.float32)
        yield f"conv1d_forward B={batch} {cin}->{cout}", (
            lambda: kernels.conv1d_forward_numpy(x, w, b),
            lambda: kernels.conv1d_forward_numba(x, w, b))
        yield f"conv1d_backward B={batch} {cin}->{cout}", (
            lambda: kernels.conv1d_backward_numpy(x, w, dout),
            lambda: kernels.conv1d_backward_numba(x, w, dout))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--number", type=int, default=2000)
    args = parser.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<34}{'numpy us':>10}{'numba us':>10}{'speedup':>9}")
    for name, (np_fn, nb_fn) in cases(np.random.default_rng(0)):
        np_fn(), nb_fn()
        t_np = min(timeit.repeat(np_fn, number=args.number, repeat=args.repeat)) / args.number
        t_nb = min(timeit.repeat(nb_fn, number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:<34}{t_np * 1e6:>10.2f}{t_nb * 1e6:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
