"""Time the queue-walk backends against each other.

Runs the compiled loop (when numba is importable) and the vectorized
numpy fallback on the same synthetic slot sequence, checks that they
agree, and prints slots-per-second figures.  The pure python loop is
timed on a shorter prefix for reference.
"""
import argparse
import time

import numpy as np

from bdrelay._kernels import BACKEND, _walk_vec, queue_walk, walk_loop_reference


def synthetic_slots(rng, n):
    in1 = np.zeros(n)
    in2 = np.zeros(n)
    out1 = np.zeros(n)
    out2 = np.zeros(n)
    kind = rng.integers(0, 6, size=n)
    amounts = rng.exponential(2.0, size=(4, n))
    in1[(kind == 0) | (kind == 2)] = amounts[0, (kind == 0) | (kind == 2)]
    in2[(kind == 1) | (kind == 2)] = amounts[1, (kind == 1) | (kind == 2)]
    out1[(kind == 3) | (kind == 5)] = amounts[2, (kind == 3) | (kind == 5)]
    out2[(kind == 4) | (kind == 5)] = amounts[3, (kind == 4) | (kind == 5)]
    return in1, in2, out1, out2


def time_kernel(fn, arrays, repeats):
    in1, in2, out1, out2 = arrays
    rr1 = np.empty_like(in1)
    rr2 = np.empty_like(in1)
    fn(in1, in2, out1, out2, 0.0, 0.0, rr1, rr2)   # warm-up / compile
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        q1f, q2f = fn(in1, in2, out1, out2, 0.0, 0.0, rr1, rr2)
        best = min(best, time.perf_counter() - t0)
    return best, (rr1.copy(), rr2.copy(), q1f, q2f)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-slots", type=int, default=5_000_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    arrays = synthetic_slots(rng, args.n_slots)
    n = args.n_slots

    results = {}
    try:
        from numba import njit
    except ImportError:
        njit = None
        print("numba not importable, timing the numpy fallback only")
    if njit is not None:
        jitted = njit(cache=True)(walk_loop_reference)
        dt, results["numba"] = time_kernel(jitted, arrays, args.repeats)
        print(f"numba loop:     {dt:8.4f} s   {n / dt / 1e6:7.1f} Mslots/s")
    dt, results["numpy"] = time_kernel(_walk_vec, arrays, args.repeats)
    print(f"numpy fallback: {dt:8.4f} s   {n / dt / 1e6:7.1f} Mslots/s")

    short = tuple(a[:200_000] for a in arrays)
    dt, _ = time_kernel(walk_loop_reference, short, 1)
    print(f"python loop:    {dt:8.4f} s   {0.2 / dt:7.2f} Mslots/s "
          f"(200k-slot prefix)")

    if len(results) == 2:
        a, b = results["numba"], results["numpy"]
        gap = max(float(np.max(np.abs(a[0] - b[0]))),
                  float(np.max(np.abs(a[1] - b[1]))),
                  abs(a[2] - b[2]), abs(a[3] - b[3]))
        print(f"largest backend disagreement: {gap:.3e} "
              f"(round-off from the running-extremum form)")
        if gap > 1e-6:
            raise SystemExit("backends disagree beyond round-off")

    print(f"active backend in this process: {BACKEND}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
