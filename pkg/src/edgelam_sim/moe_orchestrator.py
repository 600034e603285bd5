"""Online drift-plus-penalty scheduling of MoE expert microservices.

Each slot the gate picks top-k experts per layer; every resulting expert
call must run on one replica device.  The scheduler minimizes
``sum_i Q_i(t) * a_i(assignment) + V * cost(assignment)`` over the candidate
assignments of this slot (the classic one-shot bound on the Lyapunov drift
plus V times the penalty), then updates every device's virtual queue with
``Q(t+1) = max(Q + arrivals - service, 0)``.

Candidate sets are enumerated exhaustively up to 4096 and scored by the
accelerated kernel; beyond that a per-call greedy kicks in, which is exact
here because the objective is separable per call.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ._accel import assignment_scores
from .errors import SchedulingError, ShapeError
from .netsim import (
    DeviceProfile,
    SlotClock,
    comm_latency,
    energy,
    fading_sequence,
    shannon_rate,
)
from .numerics import as_vector
from .rng import stream

MAX_EXHAUSTIVE_CANDIDATES = 4096


@dataclass(frozen=True)
class ExpertMicroservice:
    """One virtualized expert: its cost per call and where replicas live."""

    id: str
    workload_per_call: float  # FLOPs
    output_size: float  # bits
    replicas: tuple[str, ...]

    def __post_init__(self):
        if self.workload_per_call <= 0:
            raise ValueError(f"expert {self.id}: workload must be > 0")
        if self.output_size < 0:
            raise ValueError(f"expert {self.id}: output_size must be >= 0")
        if not self.replicas:
            raise ValueError(f"expert {self.id}: replica set must be nonempty")


@dataclass(frozen=True)
class VirtualQueue:
    """Backlog of admitted-but-unserved work on one device, in FLOPs."""

    device_id: str
    backlog: float = 0.0

    def __post_init__(self):
        if self.backlog < 0:
            raise ValueError("backlog must be >= 0")


def queue_update(q: VirtualQueue, arrival: float, service: float) -> VirtualQueue:
    """Lindley recursion: Q(t+1) = max(Q(t) + a(t) - b(t), 0)."""
    if arrival < 0 or service < 0:
        raise ValueError("arrival and service must be >= 0")
    return VirtualQueue(q.device_id, max(q.backlog + arrival - service, 0.0))


@dataclass(frozen=True)
class MicroserviceDag:
    """Workload graph: node i is a microservice call, edges are data flow."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = len(self.nodes)
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ShapeError(f"edge ({a},{b}) out of range for {n} nodes")
        self.topological_order()

    def topological_order(self) -> list[int]:
        """Kahn topological sort; raises on cycles."""
        n = len(self.nodes)
        indeg = [0] * n
        out: dict[int, list[int]] = {i: [] for i in range(n)}
        for a, b in self.edges:
            indeg[b] += 1
            out[a].append(b)
        queue = [i for i in range(n) if indeg[i] == 0]
        order = []
        while queue:
            i = queue.pop()
            order.append(i)
            for j in out[i]:
                indeg[j] -= 1
                if indeg[j] == 0:
                    queue.append(j)
        if len(order) != n:
            raise ValueError("microservice graph contains a cycle")
        return order


@dataclass(frozen=True)
class InferenceTask:
    """One arrived task: its call DAG and the gate-selected experts per layer."""

    dag: MicroserviceDag
    selected: tuple[tuple[int, ...], ...]  # per layer: chosen expert indices
    arrival_slot: int


@dataclass(frozen=True)
class TradeoffKnob:
    """Drift-plus-penalty weight: larger V buys lower cost at more backlog."""

    v: float

    def __post_init__(self):
        if not (self.v >= 0 and math.isfinite(self.v)):
            raise ValueError("V must be finite and >= 0")


def gate_select(scores, k: int) -> tuple[int, ...]:
    """Indices of the top-k scores, ties broken toward the lower index."""
    s = as_vector(scores)
    if not 1 <= k <= s.size:
        raise ValueError(f"k={k} outside [1, {s.size}]")
    picked = np.argsort(-s, kind="stable")[:k]
    return tuple(sorted(int(i) for i in picked))


def drift_plus_penalty_decision(queues, candidates, call_loads, v, cost_fn):
    """Argmin over candidates of sum_i Q_i a_i(candidate) + V cost(candidate).

    ``queues`` maps device id to backlog; each candidate is a tuple giving
    the device of every call; ``call_loads`` aligns with calls.  Ties break
    lexicographically on the device-id tuple.
    """
    if not candidates:
        raise SchedulingError("candidate set is empty")
    if v < 0:
        raise ValueError("V must be >= 0")
    backlog = {
        dev: q.backlog if isinstance(q, VirtualQueue) else float(q)
        for dev, q in queues.items()
    }
    best_score = math.inf
    best = None
    for cand in sorted(candidates):
        if len(cand) != len(call_loads):
            raise ShapeError("candidate length != number of calls")
        drift = 0.0
        for dev, load in zip(cand, call_loads):
            drift += backlog[dev] * load
        score = drift + v * cost_fn(cand)
        if score < best_score:
            best_score = score
            best = cand
    return best


# ---------------------------------------------------------------------------
# orchestration loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SlotRecord:
    slot: int
    assignment: tuple[tuple[str, str], ...]  # (expert id, device id) per call
    slot_cost: float
    backlogs: dict[str, float]


@dataclass(frozen=True)
class OrchestrationResult:
    records: list[SlotRecord]
    time_avg_cost: float
    time_avg_backlog: float
    max_backlog: float


def _chain_task(layer_experts: list[tuple[int, ...]], expert_ids: list[str], slot: int) -> InferenceTask:
    """Build the layered call DAG for one task (complete bipartite between layers)."""
    nodes = []
    layer_start = []
    for sel in layer_experts:
        layer_start.append(len(nodes))
        nodes.extend(expert_ids[e] for e in sel)
    edges = []
    for li in range(len(layer_experts) - 1):
        for a in range(len(layer_experts[li])):
            for b in range(len(layer_experts[li + 1])):
                edges.append((layer_start[li] + a, layer_start[li + 1] + b))
    dag = MicroserviceDag(tuple(nodes), tuple(edges))
    return InferenceTask(dag, tuple(layer_experts), slot)


def orchestrate(
    devices: list[DeviceProfile],
    experts: list[ExpertMicroservice],
    n_slots: int,
    v: float,
    top_k: int,
    seed: int,
    bandwidth: dict[str, float],
    noise_density: float,
    layers_per_task: int = 1,
    load_jitter: float = 0.0,
    w_lat: float = 1.0,
    w_energy: float = 0.0,
    failed_devices: frozenset[str] = frozenset(),
    slot_duration: float = 1.0,
    arrival_prob: float = 1.0,
    max_exhaustive: int = MAX_EXHAUSTIVE_CANDIDATES,
    fading_sigma: float | None = None,
) -> OrchestrationResult:
    """Run the per-slot gate -> schedule -> queue-update loop.

    Gate scores and per-call load jitter come from named seeded streams, so
    the whole trace is a pure function of (config, seed).  Cost of a call on
    a device is ``w_lat * upload latency + w_energy * upload energy``.  The
    channel is static unless ``fading_sigma`` is set, in which case every
    device's gain is modulated by its seeded per-slot fading sequence.
    """
    if n_slots < 1:
        raise ValueError("need at least one slot")
    TradeoffKnob(v)
    order = sorted(devices, key=lambda d: d.id)
    dev_index = {d.id: i for i, d in enumerate(order)}
    expert_ids = [e.id for e in experts]

    alive_replicas = []
    for e in experts:
        alive = tuple(sorted(r for r in e.replicas if r not in failed_devices))
        if not alive:
            raise SchedulingError(f"expert {e.id} has no live replicas")
        for r in alive:
            if r not in dev_index:
                raise SchedulingError(f"expert {e.id} replica {r} is not a device")
        alive_replicas.append(alive)

    clock = SlotClock(0, slot_duration)
    if fading_sigma is None:
        fading = np.ones((n_slots, len(order)))
    else:
        fading = np.column_stack(
            [fading_sequence(seed, d.id, n_slots, fading_sigma) for d in order]
        )
    service = np.array([d.compute_rate * clock.slot_duration for d in order])

    def slot_cost_matrix(slot: int) -> np.ndarray:
        """Cost of one call of each expert on each device at this slot."""
        out = np.empty((len(experts), len(order)))
        for j, d in enumerate(order):
            rate = shannon_rate(
                bandwidth.get(d.id, 0.0),
                d.channel_gain * fading[slot, j],
                d.tx_power,
                noise_density,
            )
            for ei, e in enumerate(experts):
                lat = comm_latency(e.output_size, rate)
                if math.isinf(lat):
                    out[ei, j] = math.inf  # starved link, regardless of weights
                else:
                    out[ei, j] = w_lat * lat + w_energy * energy(d.tx_power, lat)
        return out

    base_cost = slot_cost_matrix(0)

    gate_rng = stream(seed, "moe.gate")
    jitter_rng = stream(seed, "moe.jitter")
    arrival_rng = stream(seed, "moe.arrivals")

    product_cache: dict[tuple[tuple[str, ...], ...], np.ndarray] = {}
    queues = np.zeros(len(order))
    records: list[SlotRecord] = []
    cost_sum = 0.0
    backlog_sum = 0.0
    max_backlog = 0.0

    while clock.slot_index < n_slots:
        slot = clock.slot_index
        if fading_sigma is not None and slot > 0:
            base_cost = slot_cost_matrix(slot)
        calls: list[int] = []  # expert index per call
        if arrival_rng.random() <= arrival_prob:
            layer_sel = []
            for _ in range(layers_per_task):
                scores = gate_rng.random(len(experts))
                layer_sel.append(gate_select(scores, top_k))
            task = _chain_task(layer_sel, expert_ids, slot)
            for sel in task.selected:
                calls.extend(sel)

        arrivals = np.zeros(len(order))
        assignment: tuple[tuple[str, str], ...] = ()
        slot_cost = 0.0
        if calls:
            loads = np.array([experts[e].workload_per_call for e in calls])
            if load_jitter > 0.0:
                loads = loads * (
                    1.0 + load_jitter * (2.0 * jitter_rng.random(len(calls)) - 1.0)
                )
            replica_lists = tuple(alive_replicas[e] for e in calls)
            n_cand = 1
            for rl in replica_lists:
                n_cand *= len(rl)
            call_cost = base_cost[calls, :]
            if n_cand <= max_exhaustive:
                if replica_lists not in product_cache:
                    combos = np.array(
                        [
                            [dev_index[r] for r in combo]
                            for combo in itertools.product(*replica_lists)
                        ],
                        dtype=np.int64,
                    )
                    product_cache[replica_lists] = combos
                cand = product_cache[replica_lists]
                scores = assignment_scores(cand, queues, loads, call_cost, v)
                chosen = cand[int(np.argmin(scores))]
            else:
                # exact here: the objective separates across calls
                chosen = np.empty(len(calls), dtype=np.int64)
                for c, rl in enumerate(replica_lists):
                    opts = np.array([dev_index[r] for r in rl], dtype=np.int64)
                    per = queues[opts] * loads[c] + v * call_cost[c, opts]
                    chosen[c] = opts[int(np.argmin(per))]
            for c, j in enumerate(chosen):
                arrivals[j] += loads[c]
                slot_cost += call_cost[c, j]
            assignment = tuple(
                (expert_ids[calls[c]], order[j].id) for c, j in enumerate(chosen)
            )

        queues = np.maximum(queues + arrivals - service, 0.0)
        cost_sum += slot_cost
        backlog_sum += float(queues.sum())
        max_backlog = max(max_backlog, float(queues.max()))
        records.append(
            SlotRecord(
                slot,
                assignment,
                slot_cost,
                {d.id: float(queues[j]) for j, d in enumerate(order)},
            )
        )
        clock.advance()

    return OrchestrationResult(
        records,
        cost_sum / n_slots,
        backlog_sum / n_slots,
        max_backlog,
    )
