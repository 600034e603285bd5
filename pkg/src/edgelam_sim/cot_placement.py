"""Chain-of-thought microservice placement.

A reasoning chain is a path graph of steps, each with a compute workload
and a handoff payload to its successor.  Placing steps on heterogeneous
devices trades compute speed against inter-device handoff latency under
per-device memory capacity.  ``solve_exact`` enumerates every assignment
(guarded at 10^6) through the accelerated scan; ``solve_local_search`` is
the greedy + hill-climbing heuristic whose optimality gap tests measure
against the exact oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import placement_batch, placement_scan
from .errors import PlacementError, SizeLimitError
from .netsim import DeviceProfile, shannon_rate
from .rng import stream

ENUMERATION_GUARD = 10**6


@dataclass(frozen=True)
class CotStep:
    workload: float  # FLOPs
    handoff_size: float  # bits shipped to the next step

    def __post_init__(self):
        if self.workload <= 0:
            raise ValueError("step workload must be > 0")
        if self.handoff_size < 0:
            raise ValueError("handoff_size must be >= 0")


@dataclass(frozen=True)
class CotChain:
    """Ordered reasoning steps; as a graph, a path."""

    steps: tuple[CotStep, ...]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("chain needs at least one step")

    def __len__(self) -> int:
        return len(self.steps)

    def edges(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(len(self.steps) - 1)]


@dataclass(frozen=True)
class Placement:
    """Step -> device assignment; equivalently a binary indicator x[s, d]."""

    assignment: tuple[int, ...]
    n_devices: int

    def __post_init__(self):
        for d in self.assignment:
            if not 0 <= d < self.n_devices:
                raise PlacementError(f"device index {d} out of range")

    def indicator(self) -> np.ndarray:
        x = np.zeros((len(self.assignment), self.n_devices), dtype=np.int64)
        x[np.arange(len(self.assignment)), list(self.assignment)] = 1
        return x

    @staticmethod
    def from_indicator(x) -> "Placement":
        x = np.asarray(x)
        if x.ndim != 2 or not np.all((x == 0) | (x == 1)):
            raise PlacementError("indicator must be a binary matrix")
        if not np.all(x.sum(axis=1) == 1):
            raise PlacementError("each step must be placed on exactly one device")
        return Placement(tuple(int(d) for d in x.argmax(axis=1)), x.shape[1])


@dataclass(frozen=True)
class PlacementResult:
    placement: Placement | None
    cost: float
    feasible: bool
    solver: str
    n_feasible: int | None = None


def path_graph_check(n_nodes: int, edges) -> bool:
    """True iff the graph is a path: connected, acyclic, all degrees <= 2."""
    if n_nodes < 1:
        return False
    edges = [(int(a), int(b)) for a, b in edges]
    if len(edges) != n_nodes - 1:
        return False  # trees have n-1 edges; more means a cycle, fewer means disconnection
    adj: dict[int, list[int]] = {i: [] for i in range(n_nodes)}
    for a, b in edges:
        if a == b or not (0 <= a < n_nodes and 0 <= b < n_nodes):
            return False
        adj[a].append(b)
        adj[b].append(a)
    if any(len(neigh) > 2 for neigh in adj.values()):
        return False
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                frontier.append(j)
    return len(seen) == n_nodes


def link_rates_from_gains(
    devices: list[DeviceProfile], gains, link_bandwidth: float, noise_density: float
) -> np.ndarray:
    """Full-mesh link rate matrix from a pairwise power-gain matrix."""
    n = len(devices)
    gains = np.asarray(gains, dtype=np.float64)
    if gains.shape != (n, n):
        raise PlacementError(f"gain matrix must be {n}x{n}, got {gains.shape}")
    rates = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a != b:
                rates[a, b] = shannon_rate(
                    link_bandwidth, gains[a, b], devices[a].tx_power, noise_density
                )
    return rates


def step_memory(chain: CotChain, shard_bytes: float) -> np.ndarray:
    """Memory bytes a deployed step occupies: handoff buffer + model shard."""
    return np.array([s.handoff_size / 8.0 + shard_bytes for s in chain.steps])


def _cost_arrays(chain, devices, link_rates, shard_bytes):
    n_steps = len(chain)
    n_dev = len(devices)
    comp = np.empty((n_steps, n_dev))
    for s, step in enumerate(chain.steps):
        for d, dev in enumerate(devices):
            comp[s, d] = step.workload / dev.compute_rate
    comm = np.zeros((max(n_steps - 1, 0), n_dev, n_dev))
    for s in range(n_steps - 1):
        bits = chain.steps[s].handoff_size
        for a in range(n_dev):
            for b in range(n_dev):
                if a == b or bits == 0.0:
                    continue
                rate = link_rates[a, b]
                comm[s, a, b] = bits / rate if rate > 0 else np.inf
    mem = step_memory(chain, shard_bytes)
    cap = np.array([d.memory_capacity for d in devices])
    return comp, comm, mem, cap


def validate_placement(
    chain: CotChain, placement: Placement, devices: list[DeviceProfile], shard_bytes: float
) -> None:
    """Independent constraint check; raises PlacementError on violation."""
    if len(placement.assignment) != len(chain):
        raise PlacementError(
            f"placement covers {len(placement.assignment)} steps, chain has {len(chain)}"
        )
    if placement.n_devices != len(devices):
        raise PlacementError("placement device count differs from the device list")
    x = placement.indicator()
    if not np.all(x.sum(axis=1) == 1):
        raise PlacementError("each step must sit on exactly one device")
    mem = step_memory(chain, shard_bytes)
    for d, dev in enumerate(devices):
        load = float(mem[x[:, d] == 1].sum())
        if load > dev.memory_capacity:
            raise PlacementError(
                f"device {dev.id} over capacity: {load} > {dev.memory_capacity}"
            )


def placement_cost(
    chain: CotChain,
    placement: Placement,
    devices: list[DeviceProfile],
    link_rates: np.ndarray,
    shard_bytes: float = 0.0,
) -> float:
    """End-to-end latency: per-step compute plus inter-device handoffs."""
    validate_placement(chain, placement, devices, shard_bytes)
    total = 0.0
    prev = None
    for s, step in enumerate(chain.steps):
        d = placement.assignment[s]
        if s > 0 and prev != d:
            bits = chain.steps[s - 1].handoff_size
            if bits > 0:
                rate = link_rates[prev, d]
                total += bits / rate if rate > 0 else math.inf
        total += step.workload / devices[d].compute_rate
        prev = d
    return total


def solve_exact(
    chain: CotChain,
    devices: list[DeviceProfile],
    link_rates: np.ndarray,
    shard_bytes: float = 0.0,
) -> PlacementResult:
    """Globally minimal placement by exhaustive scan (guard: D^S <= 10^6).

    Ties resolve to the lexicographically smallest device vector.  Returns
    an infeasible result when no capacity-feasible placement has finite cost.
    """
    n_steps, n_dev = len(chain), len(devices)
    if n_dev**n_steps > ENUMERATION_GUARD:
        raise SizeLimitError(
            f"{n_dev}^{n_steps} placements exceed the {ENUMERATION_GUARD} guard; "
            "use solve_local_search"
        )
    comp, comm, mem, cap = _cost_arrays(chain, devices, link_rates, shard_bytes)
    best_idx, best_cost, n_feasible = placement_scan(comp, comm, mem, cap)
    if best_idx < 0:
        return PlacementResult(None, math.inf, False, "exact", int(n_feasible))
    digits = []
    rem = int(best_idx)
    for _ in range(n_steps):
        digits.append(rem % n_dev)
        rem //= n_dev
    assignment = tuple(reversed(digits))
    return PlacementResult(
        Placement(assignment, n_dev), float(best_cost), True, "exact", int(n_feasible)
    )


def solve_local_search(
    chain: CotChain,
    devices: list[DeviceProfile],
    link_rates: np.ndarray,
    seed: int,
    iters: int,
    shard_bytes: float = 0.0,
) -> PlacementResult:
    """Greedy construction plus strict hill-climbing reassignment.

    ``iters=1`` returns the greedy placement; each further iteration is one
    improvement pass over the steps in a seeded order, moving a step to its
    best strictly-better feasible device.  Sideways moves are disallowed, so
    the search terminates; the result is deterministic per seed.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    n_steps, n_dev = len(chain), len(devices)
    comp, comm, mem, cap = _cost_arrays(chain, devices, link_rates, shard_bytes)

    loads = np.zeros(n_dev)
    assignment: list[int] = []
    for s in range(n_steps):
        best_d, best_marginal = -1, math.inf
        for d in range(n_dev):
            if loads[d] + mem[s] > cap[d]:
                continue
            marginal = comp[s, d]
            if s > 0:
                marginal += comm[s - 1, assignment[s - 1], d]
            if marginal < best_marginal:
                best_marginal = marginal
                best_d = d
        if best_d < 0:
            return PlacementResult(None, math.inf, False, "local_search")
        assignment.append(best_d)
        loads[best_d] += mem[s]

    def total_cost(assign) -> float:
        cost = comp[0, assign[0]]
        for s in range(1, n_steps):
            cost += comm[s - 1, assign[s - 1], assign[s]]
            cost += comp[s, assign[s]]
        return cost

    rng = stream(seed, "cot.local_search")
    current = total_cost(assignment)
    for _ in range(iters - 1):
        improved = False
        for s in rng.permutation(n_steps):
            here = assignment[s]
            best_d, best_cost = here, current
            for d in range(n_dev):
                if d == here or loads[d] + mem[s] > cap[d]:
                    continue
                trial = assignment.copy()
                trial[s] = d
                c = total_cost(trial)
                if c < best_cost:
                    best_cost, best_d = c, d
            if best_d != here:
                loads[here] -= mem[s]
                loads[best_d] += mem[s]
                assignment[s] = best_d
                current = best_cost
                improved = True
        if not improved:
            break
    placement = Placement(tuple(int(d) for d in assignment), n_dev)
    return PlacementResult(placement, float(current), True, "local_search")


def random_feasible_placements(
    chain: CotChain,
    devices: list[DeviceProfile],
    link_rates: np.ndarray,
    n: int,
    seed: int,
    shard_bytes: float = 0.0,
    max_tries: int = 200,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n`` capacity-feasible placements; returns (placements, costs)."""
    n_steps, n_dev = len(chain), len(devices)
    comp, comm, mem, cap = _cost_arrays(chain, devices, link_rates, shard_bytes)
    rng = stream(seed, "cot.sampling")
    found: list[np.ndarray] = []
    costs: list[np.ndarray] = []
    total = 0
    for _ in range(max_tries):
        batch = rng.integers(0, n_dev, size=(max(n, 256), n_steps))
        c, ok = placement_batch(batch, comp, comm, mem, cap)
        found.append(batch[ok])
        costs.append(c[ok])
        total += int(ok.sum())
        if total >= n:
            break
    if total < n:
        raise PlacementError(
            f"could not sample {n} feasible placements in {max_tries} batches"
        )
    placements = np.concatenate(found)[:n]
    cost = np.concatenate(costs)[:n]
    return placements, cost


def make_random_instance(
    seed: int,
    n_steps: int,
    n_devices: int,
    tightness: float = 0.6,
) -> tuple[CotChain, list[DeviceProfile], np.ndarray, float]:
    """Seeded random instance: (chain, devices, link_rates, shard_bytes).

    ``tightness`` scales capacities: 1.0 means one device can barely host
    every step, lower is looser.
    """
    rng = stream(seed, "cot.instance")
    steps = tuple(
        CotStep(
            workload=float(rng.uniform(0.5e9, 4e9)),
            handoff_size=float(rng.uniform(1e5, 2e6)),
        )
        for _ in range(n_steps)
    )
    chain = CotChain(steps)
    shard_bytes = float(rng.uniform(1e5, 1e6))
    per_step = step_memory(chain, shard_bytes)
    total_mem = float(per_step.sum())
    devices = [
        DeviceProfile(
            id=f"d{i}",
            compute_rate=float(rng.uniform(0.5e9, 5e9)),
            memory_capacity=float(rng.uniform(tightness, 1.5) * total_mem),
            channel_gain=1.0,
            tx_power=float(rng.uniform(0.2, 1.0)),
        )
        for i in range(n_devices)
    ]
    gains = rng.uniform(0.05, 1.0, size=(n_devices, n_devices))
    link_rates = link_rates_from_gains(devices, gains, 1e6, 1e-9)
    return chain, devices, link_rates, shard_bytes
