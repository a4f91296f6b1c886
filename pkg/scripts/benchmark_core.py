#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Run after installing the package:

    python scripts/benchmark_core.py

Force the fallback at import time with CASHTREE_NO_EXT=1 to verify both
paths end to end:

    CASHTREE_NO_EXT=1 cashtree run --space synth3 --budget 50
"""

import time

import numpy as np

from cashtree import _core
from cashtree._core import _ref


def time_call(fn, *args, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    print(f"active backend: {_core.BACKEND}")
    if _core.BACKEND != "cython":
        print("(extension not built; timing the fallback against itself)")

    print(f"\n{'case':40s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}")
    for n, m, dc, dk in ((100, 100, 4, 1), (300, 300, 4, 1), (500, 800, 9, 0),
                         (800, 800, 4, 2)):
        xc1, xk1 = rng.random((n, dc)), rng.integers(0, 3, (n, dk))
        xc2, xk2 = rng.random((m, dc)), rng.integers(0, 3, (m, dk))
        ls = rng.random(dc) + 0.1
        args = (xc1, xk1, xc2, xk2, ls, 0.7, 1.2)
        t_ref = time_call(_ref.kernel_cross, *args)
        t_ext = time_call(_core.kernel_cross, *args)
        label = f"kernel_cross n={n} m={m} dc={dc} dk={dk}"
        print(f"{label:40s} {t_ref * 1e3:9.2f}ms {t_ext * 1e3:9.2f}ms "
              f"{t_ref / t_ext:7.1f}x")

    for n in (200, 500, 1000):
        a, b = rng.normal(size=n), rng.normal(size=n)
        t_ref = time_call(_ref.kendall_counts, a, b)
        t_ext = time_call(_core.kendall_counts, a, b)
        label = f"kendall_counts n={n}"
        print(f"{label:40s} {t_ref * 1e3:9.2f}ms {t_ext * 1e3:9.2f}ms "
              f"{t_ref / t_ext:7.1f}x")


if __name__ == "__main__":
    main()
