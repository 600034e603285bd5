#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs both paths on the same inputs and prints wall times plus the speedup.
The numba path is warmed once before timing so JIT compile stays out of the
numbers.  `EDGELAM_NO_NUMBA=1` makes the package itself use the numpy path;
this script always imports both implementations explicitly.
"""

import time

import numpy as np

from edgelam_sim._accel import (
    NUMBA_ENABLED,
    assignment_scores_numpy,
    placement_scan_numpy,
)

if NUMBA_ENABLED:
    from edgelam_sim._accel import assignment_scores_jit, placement_scan_jit
else:
    assignment_scores_jit = placement_scan_jit = None


def timeit(fn, *args, repeat=5):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_placement_scan(n_steps=8, n_devices=5, seed=0):
    rng = np.random.default_rng(seed)
    comp = rng.uniform(0.1, 2.0, (n_steps, n_devices))
    comm = rng.uniform(0.0, 1.0, (n_steps - 1, n_devices, n_devices))
    for s in range(n_steps - 1):
        np.fill_diagonal(comm[s], 0.0)
    mem = rng.uniform(0.1, 1.0, n_steps)
    cap = rng.uniform(1.0, 4.0, n_devices)
    args = (comp, comm, mem, cap)

    print(f"placement scan: {n_devices}^{n_steps} = {n_devices**n_steps} placements")
    t_np, res_np = timeit(placement_scan_numpy, *args)
    print(f"  numpy : {1e3 * t_np:8.2f} ms   best idx {res_np[0]}")
    if placement_scan_jit is not None:
        placement_scan_jit(*args)  # warm the JIT
        t_nb, res_nb = timeit(placement_scan_jit, *args)
        assert res_nb[0] == res_np[0] and res_nb[1] == res_np[1]
        print(f"  numba : {1e3 * t_nb:8.2f} ms   speedup x{t_np / t_nb:.1f}")


def bench_assignment_scores(n_candidates=4096, n_calls=6, n_devices=4, seed=1):
    rng = np.random.default_rng(seed)
    cand = rng.integers(0, n_devices, size=(n_candidates, n_calls))
    queue = rng.uniform(0, 10, n_devices)
    load = rng.uniform(0.1, 2.0, n_calls)
    cost = rng.uniform(0, 3.0, (n_calls, n_devices))
    args = (cand, queue, load, cost, 2.0)

    print(f"assignment scores: {n_candidates} candidates x {n_calls} calls, "
          "repeated over 2000 slots")

    def numpy_slots():
        for _ in range(2000):
            assignment_scores_numpy(*args)

    t_np, _ = timeit(numpy_slots, repeat=3)
    print(f"  numpy : {1e3 * t_np:8.2f} ms")
    if assignment_scores_jit is not None:
        assignment_scores_jit(*args)

        def numba_slots():
            for _ in range(2000):
                assignment_scores_jit(*args)

        t_nb, _ = timeit(numba_slots, repeat=3)
        sc_np = assignment_scores_numpy(*args)
        sc_nb = assignment_scores_jit(*args)
        assert np.array_equal(sc_np, sc_nb)
        print(f"  numba : {1e3 * t_nb:8.2f} ms   speedup x{t_np / t_nb:.1f}")


if __name__ == "__main__":
    if not NUMBA_ENABLED:
        print("numba disabled or unavailable; timing the numpy path only\n")
    bench_placement_scan()
    print()
    bench_assignment_scores()
