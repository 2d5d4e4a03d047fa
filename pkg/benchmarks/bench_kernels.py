"""Numba vs numpy timings for the two hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are called directly (the ``HSH_NUMBA`` switch only
picks the default), so one run reports both columns.  The first numba call
is excluded from the timings; its compile/cache-load time is printed apart.
"""

import argparse
import time

import numpy as np

from hsh import _kernels as K


def _best(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def pair_scan_case(n, rng):
    side = 4.0 * n ** (1 / 3)
    x = rng.uniform(0, side, (n, 3))
    # push overlapping particles apart along a line so the case stays legal
    x[:, 0] += 3.0 * np.arange(n)
    v = rng.normal(size=(n, 3))
    return x, v, 1.0


def ebf_case(P, n, rng):
    pts = rng.normal(0, 1.0, (P, 1 + n, 6))
    pts[:, :, :3] *= 3.0
    ks = np.zeros(n, dtype=np.int64)
    signs = np.array([1, -1] * n, dtype=np.int64)[:n]
    return pts, ks, signs, 1, 0.5, 1.0, 0.0


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy column is timed")

    rows = []
    for n in (3, 10, 50, 200):
        case = pair_scan_case(n, rng)
        rows.append((f"next_pair_event N={n}", K.next_pair_event_numpy, K.next_pair_event_numba, case))
    for P, n in ((1_000, 2), (20_000, 2), (20_000, 3)):
        case = ebf_case(P, n, rng)
        rows.append((f"ebf_forward P={P} n={n}", K.ebf_forward_numpy, K.ebf_forward_numba, case))

    print(f"{'kernel':<28}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, f_np, f_nb, case in rows:
        t_np = _best(f_np, case, args.repeat)
        if f_nb is None:
            print(f"{name:<28}{t_np * 1e3:>12.3f}{'-':>12}{'-':>10}")
            continue
        t0 = time.perf_counter()
        ref_np, ref_nb = f_np(*case), f_nb(*case)
        first = time.perf_counter() - t0
        if name.startswith("ebf"):
            assert np.array_equal(ref_np[1], ref_nb[1]), "status codes differ between backends"
        t_nb = _best(f_nb, case, args.repeat)
        print(f"{name:<28}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x   (first call {first:.2f}s)")


if __name__ == "__main__":
    main()
