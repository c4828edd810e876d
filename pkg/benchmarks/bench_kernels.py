"""Compare the numba and numpy paths of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both paths are imported directly, so the VNMIX_DISABLE_NUMBA flag does not
matter here.
"""
import argparse
import timeit

import numpy as np

from vnmix import _kernels as K


def cases(rng):
    v, c = rng.uniform(0, 2, 18), rng.uniform(0.1, 1, 18)
    yield "subset_knapsack n=18", K.subset_knapsack_numpy, K.subset_knapsack_jit, (v, c, float(c.sum() / 2))
    v, ic = rng.uniform(0, 2, 60), rng.integers(1, 200, 60)
    yield "grid_knapsack n=60 cap=3000", K.grid_knapsack_numpy, K.grid_knapsack_jit, (v, ic, 3000)
    for n in (16, 64):
        m = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / (2 * np.sqrt(n))
        x = rng.standard_normal(n) + 0j
        yield f"orbit N={n} steps=2000", K.orbit_numpy, K.orbit_jit, (m, x, 2000)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy path exists")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for name, f_np, f_jit, a in cases(rng):
        f_jit(*a)  # compile outside the timing
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat))
        t_jit = min(timeit.repeat(lambda: f_jit(*a), number=1, repeat=args.repeat))
        print(f"{name:32s} {1e3 * t_np:12.3f} {1e3 * t_jit:12.3f} {t_np / t_jit:8.1f}")


if __name__ == "__main__":
    main()
