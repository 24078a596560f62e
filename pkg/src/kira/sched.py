"""Task-to-slot assignment: delay scheduling with per-level waits, plus the
static file-name-partitioning baseline, and a discrete-event simulator that
exercises the same assignment rule without running any real tasks.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .blockmap import BlockMap, ClusterModel
from .metrics import (LOCALITY_ANY, LOCALITY_NODE, LOCALITY_PROCESS,
                      LOCALITY_RACK, RunMetrics, TaskRecord)

POLICY_DELAY = "delay"
POLICY_STATIC = "static"


@dataclass
class SchedPolicy:
    """Scheduling policy and per-locality-level waits (DELAY only)."""

    kind: str = POLICY_DELAY
    wait_process_ms: float = 0.0
    wait_node_ms: float = 0.0
    wait_rack_ms: float = 0.0

    def __post_init__(self):
        if self.kind not in (POLICY_DELAY, POLICY_STATIC):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if min(self.wait_process_ms, self.wait_node_ms, self.wait_rack_ms) < 0:
            raise ValueError("waits must be >= 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "wait_process_ms": self.wait_process_ms,
                "wait_node_ms": self.wait_node_ms, "wait_rack_ms": self.wait_rack_ms}


class PendingTask:
    """One schedulable task with optional preferred nodes."""

    __slots__ = ("seq", "partition", "preferred", "enqueue_ms", "payload",
                 "assigned", "static_node")

    def __init__(self, seq, partition, preferred=(), enqueue_ms=0.0,
                 payload=None, static_node=None):
        self.seq = seq
        self.partition = partition
        self.preferred = tuple(preferred)
        self.enqueue_ms = enqueue_ms
        self.payload = payload
        self.assigned = False
        self.static_node = static_node


class PendingSet:
    """Pending tasks indexed for the assignment rule.

    DELAY mode: per-preferred-node FIFO queues, a no-preference FIFO, and a
    global FIFO for the aged-task rule. STATIC mode: one FIFO per owning node.
    """

    def __init__(self, static: bool = False):
        self.static = static
        self.by_node: Dict[str, deque] = {}
        self.no_pref: deque = deque()
        self.fifo: deque = deque()
        self._count = 0

    def push(self, task: PendingTask):
        self._count += 1
        if self.static:
            self.by_node.setdefault(task.static_node, deque()).append(task)
            return
        if task.preferred:
            for node in task.preferred:
                self.by_node.setdefault(node, deque()).append(task)
            self.fifo.append(task)
        else:
            self.no_pref.append(task)

    def __len__(self) -> int:
        return self._count

    def _pop_head(self, q: deque) -> Optional[PendingTask]:
        while q:
            task = q[0]
            if task.assigned:
                q.popleft()
                continue
            return task
        return None

    def take(self, task: PendingTask):
        task.assigned = True
        self._count -= 1

    def requeue(self, task: PendingTask, now_ms: float):
        """Put a failed task back; its wait clock restarts."""
        task.assigned = False
        task.enqueue_ms = now_ms
        self.push(task)


def assign_next(slot_node: str, pending: PendingSet, now_ms: float,
                policy: SchedPolicy, racks: Optional[Dict[str, str]] = None):
    """Pick a task for a freed slot, or report when to ask again.

    Returns (task, locality_level) when a task is assigned, else
    (None, next_eligible_ms) where next_eligible_ms may be inf. DELAY rule:
    node-preferred tasks first (FIFO); then no-preference tasks; otherwise the
    oldest pending task once it has waited wait_node_ms (immediately when
    waits are zero, so a slot is never held idle while work is pending).
    """
    if pending.static:
        q = pending.by_node.get(slot_node)
        task = pending._pop_head(q) if q is not None else None
        if task is None:
            return None, math.inf
        pending.take(task)
        level = LOCALITY_NODE if slot_node in task.preferred else LOCALITY_ANY
        return task, level

    q = pending.by_node.get(slot_node)
    if q is not None:
        task = pending._pop_head(q)
        if task is not None:
            pending.take(task)
            return task, LOCALITY_NODE
    task = pending._pop_head(pending.no_pref)
    if task is not None:
        pending.take(task)
        return task, LOCALITY_PROCESS
    task = pending._pop_head(pending.fifo)
    if task is None:
        return None, math.inf
    waited = now_ms - task.enqueue_ms
    if waited >= policy.wait_node_ms:
        pending.take(task)
        level = LOCALITY_ANY
        if racks is not None and len(set(racks.values())) > 1:
            slot_rack = racks.get(slot_node)
            if slot_rack is not None and slot_rack in {racks.get(n) for n in task.preferred}:
                level = LOCALITY_RACK
        return task, level
    return None, task.enqueue_ms + policy.wait_node_ms


def static_partition(files: Sequence[str], nodes: Sequence[str]) -> Dict[str, List[str]]:
    """Split the path-sorted file list into contiguous chunks, one per node.

    The first len(files) % len(nodes) chunks get the extra file. Each node
    processes only its own chunk (no stealing).
    """
    files = sorted(files)
    n_nodes = len(nodes)
    base = len(files) // n_nodes
    extra = len(files) % n_nodes
    out: Dict[str, List[str]] = {}
    pos = 0
    for i, node in enumerate(nodes):
        size = base + (1 if i < extra else 0)
        out[node] = files[pos:pos + size]
        pos += size
    return out


@dataclass
class SimTaskModel:
    """Base per-task service times for the simulator (remote >= local > 0).

    Each task draws a lognormal jitter factor exp(N(0, sigma)); its local and
    remote costs are the bases times that factor.
    """

    local_cost_ms: float = 100.0
    remote_cost_ms: float = 115.0
    sigma: float = 0.2

    def __post_init__(self):
        if not (self.remote_cost_ms >= self.local_cost_ms > 0):
            raise ValueError("need remote_cost_ms >= local_cost_ms > 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")


def simulate(cluster: ClusterModel, blockmap: BlockMap, policy: SchedPolicy,
             task_model: Optional[SimTaskModel] = None, seed: int = 0,
             paths: Optional[Sequence[str]] = None) -> RunMetrics:
    """Discrete-event simulation of one single-file-per-task input stage.

    Deterministic for a fixed seed. Locality in the records is physical:
    NODE when the executing node holds a replica of the task's file.
    """
    model = task_model or SimTaskModel()
    if paths is None:
        paths = blockmap.paths()
    else:
        paths = sorted(paths)
    n = len(paths)
    rng = np.random.default_rng(seed)
    jitter = np.exp(rng.normal(0.0, model.sigma, n)) if model.sigma > 0 else np.ones(n)

    pending = PendingSet(static=policy.kind == POLICY_STATIC)
    replicas = {p: tuple(blockmap.locate(p)) for p in paths}
    if policy.kind == POLICY_STATIC:
        chunks = static_partition(paths, cluster.nodes)
        owner = {p: node for node, chunk in chunks.items() for p in chunk}
    for i, p in enumerate(paths):
        pending.push(PendingTask(
            seq=i, partition=i, preferred=replicas[p], enqueue_ms=0.0, payload=p,
            static_node=owner[p] if policy.kind == POLICY_STATIC else None))

    metrics = RunMetrics()
    heap: List[Tuple[float, int, str]] = []
    for k, (node, slot) in enumerate(cluster.slots()):
        heapq.heappush(heap, (0.0, k, node))

    while heap and len(pending):
        now, slot_id, node = heapq.heappop(heap)
        task, level = assign_next(node, pending, now, policy, cluster.racks)
        if task is None:
            if level == math.inf:
                continue  # slot retires (static starvation or nothing pending)
            heapq.heappush(heap, (max(level, now + 1e-9), slot_id, node))
            continue
        local = node in task.preferred
        cost = (model.local_cost_ms if local else model.remote_cost_ms) * jitter[task.partition]
        metrics.records.append(TaskRecord(
            task_id=task.partition, stage=0, partition=task.partition, node=node,
            locality=LOCALITY_NODE if local else LOCALITY_ANY,
            start_ms=now, end_ms=now + cost,
            is_input=True, input_local=local))
        heapq.heappush(heap, (now + cost, slot_id, node))
    return metrics
