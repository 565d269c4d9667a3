"""Numba vs pure-numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The first numba call compiles (or loads the on-disk cache); it is run once
untimed.  Both backends are checked to agree before timing.
"""
import argparse
import time

import numpy as np

from volpres._accel import USE_NUMBA
from volpres.kernels.assignment import lsap
from volpres.kernels.linalg import svd_batch
from volpres.kernels.sldiag import sl_diag_batch


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    A = rng.uniform(-2, 2, (20000, 3, 3))
    a = np.sort(rng.uniform(0.05, 3.0, (20000, 3)), axis=1)
    P = rng.uniform(0, 1, (512, 2))
    Q = rng.uniform(0, 1, (512, 2))
    C = np.linalg.norm(P[:, None] - Q[None], axis=-1)
    return [
        ("svd_batch 20000x3x3", lambda nb: svd_batch(A, use_numba=nb), lambda r: r[1]),
        ("sl_diag_batch 20000x3", lambda nb: sl_diag_batch(a, use_numba=nb), lambda r: r[0]),
        ("lsap 512x512", lambda nb: lsap(C, use_numba=nb), lambda r: r[0]),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not USE_NUMBA:
        print("numba disabled (VOLPRES_DISABLE_NUMBA set or numba missing): numpy timings only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, run, key in cases(rng):
        ref = key(run(False))
        t_np = best_of(lambda: run(False), args.repeat)
        if USE_NUMBA:
            got = key(run(True))  # compile / cache load
            assert np.allclose(got, ref, rtol=1e-8, atol=1e-10), name
            t_nb = best_of(lambda: run(True), args.repeat)
            print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<24}{t_np:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
