"""Timing comparison of the numba kernels against the numpy fallback.

Runs each hot kernel on growing sample sizes and prints per-call times
for both paths. The numba path is exercised regardless of ITDL_NUMBA so
the two implementations can be compared in one invocation.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from itdl import _kernels as k


def time_call(fn, *args, repeats=5):
    fn(*args)  # warm-up (and numba compilation)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not k._have_numba:
        print("numba unavailable: only the numpy path can be timed")
    pairs = [
        ("class_kernel_sums", k._class_kernel_sums_np, k._class_kernel_sums_nb,
         lambda x, labels, counts: (x, labels, 0.25)),
        ("qmi_value", k._qmi_value_np, k._qmi_value_nb,
         lambda x, labels, counts: (x, labels, counts, 0.25)),
        ("qmi_grad", k._qmi_grad_np, k._qmi_grad_nb,
         lambda x, labels, counts: (x, labels, counts, 0.25)),
    ]
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'N':>6}{'d':>4}{'numpy':>12}{'numba':>12}{'speedup':>9}")
    for n in (100, 300, 1000, 3000):
        for d in (2, 8):
            x = np.ascontiguousarray(rng.standard_normal((n, d)))
            labels = rng.integers(0, 4, n).astype(np.int64)
            counts = np.bincount(labels, minlength=4).astype(np.int64)
            for name, f_np, f_nb, pack in pairs:
                call = pack(x, labels, counts)
                t_np = time_call(f_np, *call, repeats=args.repeats)
                if k._have_numba:
                    t_nb = time_call(f_nb, *call, repeats=args.repeats)
                    print(f"{name:<18}{n:>6}{d:>4}{t_np:>12.2e}{t_nb:>12.2e}{t_np / t_nb:>9.1f}")
                else:
                    print(f"{name:<18}{n:>6}{d:>4}{t_np:>12.2e}{'-':>12}{'-':>9}")


if __name__ == "__main__":
    main()
