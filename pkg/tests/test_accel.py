"""numba and numpy kernel paths must agree bit-for-bit."""

import os
import subprocess
import sys

import numpy as np

from edgelam_sim._accel import (
    ACCEL_BACKEND,
    assignment_scores,
    assignment_scores_numpy,
    placement_batch,
    placement_batch_numpy,
    placement_scan,
    placement_scan_numpy,
)


def random_placement_arrays(rng):
    n_steps = int(rng.integers(1, 6))
    n_dev = int(rng.integers(2, 6))
    comp = rng.uniform(0.1, 2.0, (n_steps, n_dev))
    comm = rng.uniform(0.0, 1.0, (max(n_steps - 1, 0), n_dev, n_dev))
    for s in range(n_steps - 1):
        np.fill_diagonal(comm[s], 0.0)
    mem = rng.uniform(0.1, 1.0, n_steps)
    cap = rng.uniform(0.3, 2.5, n_dev)
    return comp, comm, mem, cap, n_steps, n_dev


def test_placement_scan_paths_identical():
    rng = np.random.default_rng(0)
    for _ in range(60):
        comp, comm, mem, cap, _, _ = random_placement_arrays(rng)
        idx_a, cost_a, feas_a = placement_scan(comp, comm, mem, cap)
        idx_b, cost_b, feas_b = placement_scan_numpy(comp, comm, mem, cap)
        assert idx_a == idx_b
        assert feas_a == feas_b
        assert cost_a == cost_b or (np.isinf(cost_a) and np.isinf(cost_b))


def test_placement_batch_paths_identical():
    rng = np.random.default_rng(1)
    for _ in range(40):
        comp, comm, mem, cap, n_steps, n_dev = random_placement_arrays(rng)
        batch = rng.integers(0, n_dev, size=(128, n_steps))
        costs_a, ok_a = placement_batch(batch, comp, comm, mem, cap)
        costs_b, ok_b = placement_batch_numpy(batch, comp, comm, mem, cap)
        assert np.array_equal(ok_a, ok_b)
        assert np.array_equal(costs_a, costs_b)


def test_assignment_scores_paths_identical():
    rng = np.random.default_rng(2)
    for _ in range(60):
        n_calls = int(rng.integers(1, 7))
        n_dev = int(rng.integers(2, 5))
        n_cand = int(rng.integers(1, 300))
        cand = rng.integers(0, n_dev, size=(n_cand, n_calls))
        queue = rng.uniform(0, 10, n_dev)
        load = rng.uniform(0.1, 2.0, n_calls)
        cost = rng.uniform(0, 3.0, (n_calls, n_dev))
        v = float(rng.uniform(0, 50))
        a = assignment_scores(cand, queue, load, cost, v)
        b = assignment_scores_numpy(cand, queue, load, cost, v)
        assert np.array_equal(a, b)


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ, EDGELAM_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "import edgelam_sim; print(edgelam_sim.ACCEL_BACKEND)"],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_default_backend_reported():
    assert ACCEL_BACKEND in ("numba", "numpy")
