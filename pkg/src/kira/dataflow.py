"""Lazy, partitioned, lineage-tracked collections with stage-based execution.

A single driver plans the DAG; a pool of in-process worker slots (one per
simulated core) runs tasks concurrently. Chains of maps fuse into one stage;
reduce_by_key/repartition introduce shuffle boundaries with a barrier between
stages. Shuffle outputs are materialized driver-side per map task, so a
failure re-runs only the lineage of the lost partition (retry budget per
task), never completed work.
"""

from __future__ import annotations

import gc
import hashlib
import math
import struct
import threading
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

from .blockmap import BlockMap, ClusterModel
from .errors import (EmptyCollection, JobFailed, KiraError, NoSuchDirectory,
                     ZeroPartitions)
from .metrics import (LOCALITY_ANY, LOCALITY_NODE, LOCALITY_PROCESS,
                      RunMetrics, TaskRecord)
from .sched import (POLICY_STATIC, PendingSet, PendingTask, SchedPolicy,
                    assign_next, static_partition)

OP_PARALLELIZE = "SOURCE-PARALLELIZE"
OP_BINARY_FILES = "SOURCE-BINARYFILES"
OP_MAP = "MAP"
OP_REDUCE_BY_KEY = "REDUCE-BY-KEY"
OP_REPARTITION = "REPARTITION"

RETRY_BUDGET = 3  # re-executions allowed per task after its first attempt


class InjectedFault(KiraError):
    """Raised by fault_plan-injected task failures."""


def _canon(key) -> bytes:
    """Canonical byte encoding for shuffle keys (stable across runs/platforms)."""
    if key is None:
        return b"N"
    if isinstance(key, bool):
        return b"B1" if key else b"B0"
    if isinstance(key, int):
        return b"I" + str(key).encode()
    if isinstance(key, float):
        return b"F" + struct.pack(">d", key)
    if isinstance(key, str):
        return b"S" + key.encode("utf-8")
    if isinstance(key, bytes):
        return b"Y" + key
    if isinstance(key, tuple):
        parts = [_canon(item) for item in key]
        return b"T" + b"".join(struct.pack(">I", len(p)) + p for p in parts)
    raise TypeError(f"unsupported shuffle key type {type(key).__name__}")


def stable_hash(key) -> int:
    """Stable 64-bit hash used by the shuffle partitioner."""
    digest = hashlib.blake2b(_canon(key), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class BroadcastHandle:
    """Immutable payload readable from every task."""

    def __init__(self, handle_id: int, value):
        self.id = handle_id
        self._value = value

    @property
    def value(self):
        return self._value


class FaultPlan:
    """Failure injection for fault-tolerance tests.

    fail_tasks: set of (stage, partition, attempt) triples; the matching
    attempt raises InjectedFault. kill_slot_task: (stage, partition); the slot
    that picks up this task dies when starting it (task re-runs elsewhere).
    """

    def __init__(self, fail_tasks=(), kill_slot_task: Optional[Tuple[int, int]] = None):
        self.fail_tasks = set(fail_tasks)
        self.kill_slot_task = kill_slot_task


class DistCollection:
    """Lazy partitioned dataset; a node of the execution DAG."""

    def __init__(self, engine: "Engine", op: str, parent: Optional["DistCollection"],
                 num_partitions: int, items: Optional[list] = None,
                 paths: Optional[List[str]] = None, fn: Optional[Callable] = None,
                 combine: Optional[Callable] = None):
        self.engine = engine
        self.id = engine._next_collection_id()
        self.op = op
        self.parent = parent
        self.num_partitions = num_partitions
        self.items = items
        self.paths = paths
        self.fn = fn
        self.combine = combine

    def map(self, fn: Callable) -> "DistCollection":
        """Lazy elementwise transform; fuses with adjacent maps into one stage."""
        return DistCollection(self.engine, OP_MAP, self, self.num_partitions, fn=fn)

    def reduce_by_key(self, combine: Callable, num_partitions: Optional[int] = None
                      ) -> "DistCollection":
        """Aggregate (k, v) pairs with an associative+commutative combine.

        Map-side pre-aggregation, then a hash shuffle (stable_hash(k) mod p).
        """
        p = self.num_partitions if num_partitions is None else num_partitions
        if p < 1:
            raise ZeroPartitions(f"num_partitions={p}")
        return DistCollection(self.engine, OP_REDUCE_BY_KEY, self, p, combine=combine)

    def repartition(self, num_partitions: int) -> "DistCollection":
        """Full shuffle preserving the element multiset."""
        if num_partitions < 1:
            raise ZeroPartitions(f"num_partitions={num_partitions}")
        return DistCollection(self.engine, OP_REPARTITION, self, num_partitions)

    def collect(self, fault_plan: Optional[FaultPlan] = None) -> list:
        """Run the DAG; concatenation of partitions in index order."""
        parts = self.engine._execute(self, "collect", fault_plan=fault_plan)
        out = []
        for p in parts:
            out.extend(p)
        return out

    def reduce(self, op: Callable, fault_plan: Optional[FaultPlan] = None):
        """Fold within partitions (in tasks), then across partition results."""
        parts = self.engine._execute(self, "reduce", reduce_op=op,
                                     fault_plan=fault_plan)
        partials = [p[0] for p in parts if p]
        if not partials:
            raise EmptyCollection("reduce over empty collection")
        acc = partials[0]
        for v in partials[1:]:
            acc = op(acc, v)
        return acc


class _Stage:
    """Chain of fused per-partition transforms between shuffle boundaries."""

    def __init__(self, source, fns, num_partitions, output):
        self.source = source      # ("items", collection) | ("files", collection)
        #                         | ("shuffle", shuffle_id, combine, n_map)
        self.fns = fns
        self.num_partitions = num_partitions
        self.output = output      # ("collect",) | ("reduce", op)
        #                         | ("shuffle", shuffle_id, combine, n_out, mode)

    def preferred(self, pidx: int, engine: "Engine") -> Tuple[str, ...]:
        if self.source[0] == "files":
            dc = self.source[1]
            if engine.blockmap is not None:
                return tuple(engine.blockmap.locate(dc.paths[pidx]))
        return ()


class _Slot:
    def __init__(self, node: str, index: int):
        self.node = node
        self.index = index
        self.dead = False


class Engine:
    """Driver: builds DAGs lazily, splits them into stages, runs them on a
    pool of worker slots with the configured scheduling policy."""

    def __init__(self, cluster: Optional[ClusterModel] = None,
                 policy: Optional[SchedPolicy] = None,
                 blockmap: Optional[BlockMap] = None):
        self.cluster = cluster or ClusterModel(nodes=["local"], cores_per_node=4)
        self.policy = policy or SchedPolicy()
        self.blockmap = blockmap
        self.tasks_executed = 0          # attempts, for laziness/fusion checks
        self.last_metrics = RunMetrics()
        self._collection_seq = 0
        self._broadcast_seq = 0
        self._shuffle_seq = 0
        self._task_seq = 0
        self._t0 = time.monotonic()
        self._shuffle_store = {}
        self._store_lock = threading.Lock()

    # --- construction (lazy; no tasks run) ---

    def _next_collection_id(self) -> int:
        self._collection_seq += 1
        return self._collection_seq

    def parallelize(self, items: Sequence, num_partitions: int) -> DistCollection:
        """Scatter a local sequence into contiguous chunks of ceil(n/p)."""
        if num_partitions < 1:
            raise ZeroPartitions(f"num_partitions={num_partitions}")
        return DistCollection(self, OP_PARALLELIZE, None, num_partitions,
                              items=list(items))

    def binary_files(self, directory) -> DistCollection:
        """One partition per file (path-sorted), as (path, bytes) elements.

        Preferred locations come from the block map (empty in shared-FS or
        plain local mode).
        """
        d = Path(directory)
        if not d.is_dir():
            raise NoSuchDirectory(str(directory))
        paths = sorted(str(p) for p in d.iterdir() if p.is_file())
        return DistCollection(self, OP_BINARY_FILES, None, len(paths), paths=paths)

    def broadcast(self, value) -> BroadcastHandle:
        """Replicate an immutable value to every worker slot."""
        self._broadcast_seq += 1
        return BroadcastHandle(self._broadcast_seq, value)

    def allgather(self, collection: DistCollection) -> BroadcastHandle:
        """collect() then broadcast the full sequence."""
        return self.broadcast(collection.collect())

    # --- planning ---

    def _plan(self, action: DistCollection, output) -> List[_Stage]:
        chain = []
        node = action
        while node is not None:
            chain.append(node)
            node = node.parent
        chain.reverse()

        stages: List[_Stage] = []
        source = None
        fns: List[Callable] = []
        n_parts = 0
        for node in chain:
            if node.op == OP_PARALLELIZE:
                source = ("items", node)
                n_parts = node.num_partitions
            elif node.op == OP_BINARY_FILES:
                source = ("files", node)
                n_parts = node.num_partitions
            elif node.op == OP_MAP:
                fns.append(node.fn)
            elif node.op in (OP_REDUCE_BY_KEY, OP_REPARTITION):
                self._shuffle_seq += 1
                sid = self._shuffle_seq
                mode = "hash" if node.op == OP_REDUCE_BY_KEY else "roundrobin"
                combine = node.combine if node.op == OP_REDUCE_BY_KEY else None
                stages.append(_Stage(source, fns,
                                     n_parts,
                                     ("shuffle", sid, combine,
                                      node.num_partitions, mode)))
                source = ("shuffle", sid, combine, n_parts)
                fns = []
                n_parts = node.num_partitions
            else:
                raise KiraError(f"unknown op {node.op}")
        stages.append(_Stage(source, fns, n_parts, output))
        return stages

    # --- execution ---

    def _now_ms(self) -> float:
        return (time.monotonic() - self._t0) * 1000.0

    def _execute(self, action: DistCollection, out_kind: str,
                 reduce_op: Optional[Callable] = None,
                 fault_plan: Optional[FaultPlan] = None) -> List[list]:
        output = ("reduce", reduce_op) if out_kind == "reduce" else ("collect",)
        stages = self._plan(action, output)
        fault_plan = fault_plan or FaultPlan()
        self._shuffle_store.clear()  # one job at a time per engine
        metrics = RunMetrics()
        slots = [_Slot(node, i) for i, (node, _k) in enumerate(self.cluster.slots())]
        results: List[list] = []
        # park the pre-job heap in the permanent generation so cyclic-gc
        # pauses do not stall concurrent worker slots mid-stage
        gc.collect()
        gc.freeze()
        try:
            for sidx, stage in enumerate(stages):
                runner = _StageRunner(self, stage, sidx, slots, fault_plan, metrics)
                results = runner.run()
        finally:
            gc.unfreeze()
        self.last_metrics = metrics
        return results

    # --- per-partition input/output used by tasks ---

    def _load_input(self, stage: _Stage, pidx: int, node: str):
        kind = stage.source[0]
        if kind == "items":
            dc = stage.source[1]
            n = len(dc.items)
            size = -(-n // dc.num_partitions) if n else 0
            return list(dc.items[pidx * size:(pidx + 1) * size]), None
        if kind == "files":
            dc = stage.source[1]
            path = dc.paths[pidx]
            if self.blockmap is not None:
                data, rec = self.blockmap.read_file(path, from_node=node)
                return [(path, data)], rec.local
            return [(path, Path(path).read_bytes())], True
        _, sid, combine, n_map = stage.source
        with self._store_lock:
            buckets = [self._shuffle_store[(sid, m)][pidx] for m in range(n_map)]
        if combine is not None:
            merged = {}
            for bucket in buckets:
                for k, v in bucket:
                    merged[k] = combine(merged[k], v) if k in merged else v
            return list(merged.items()), None
        out = []
        for bucket in buckets:
            out.extend(bucket)
        return out, None

    def _store_output(self, stage: _Stage, pidx: int, items: list):
        if stage.output[0] in ("collect",):
            return items
        if stage.output[0] == "reduce":
            op = stage.output[1]
            if not items:
                return []
            acc = items[0]
            for v in items[1:]:
                acc = op(acc, v)
            return [acc]
        _, sid, combine, n_out, mode = stage.output
        buckets: List[list] = [[] for _ in range(n_out)]
        if mode == "hash":
            merged = {}
            for k, v in items:
                merged[k] = combine(merged[k], v) if k in merged else v
            for k, v in merged.items():
                buckets[stable_hash(k) % n_out].append((k, v))
        else:
            for i, item in enumerate(items):
                buckets[(pidx + i) % n_out].append(item)
        with self._store_lock:
            self._shuffle_store[(sid, pidx)] = buckets
        return []

    def _run_task(self, stage: _Stage, sidx: int, pidx: int, node: str,
                  attempt: int, fault_plan: FaultPlan):
        if (sidx, pidx, attempt) in fault_plan.fail_tasks:
            raise InjectedFault(f"injected failure: stage {sidx} partition {pidx} "
                                f"attempt {attempt}")
        items, input_local = self._load_input(stage, pidx, node)
        for fn in stage.fns:
            items = [fn(x) for x in items]
        return self._store_output(stage, pidx, items), input_local


class _StageRunner:
    """Runs one stage's tasks on the slot pool with the engine's policy."""

    def __init__(self, engine: Engine, stage: _Stage, sidx: int,
                 slots: List[_Slot], fault_plan: FaultPlan, metrics: RunMetrics):
        self.engine = engine
        self.stage = stage
        self.sidx = sidx
        self.slots = slots
        self.fault_plan = fault_plan
        self.metrics = metrics
        self.cond = threading.Condition()
        self.results: List[Optional[list]] = [None] * stage.num_partitions
        self.done = 0
        self.in_flight = 0
        self.attempts = [0] * stage.num_partitions
        self.abort: Optional[BaseException] = None
        self.kill_fired = False
        self.is_input = stage.source[0] == "files"
        self.pending = self._build_pending()

    def _build_pending(self) -> PendingSet:
        now = self.engine._now_ms()
        static = (self.engine.policy.kind == POLICY_STATIC and self.is_input)
        pending = PendingSet(static=static)
        prefs = [self.stage.preferred(p, self.engine)
                 for p in range(self.stage.num_partitions)]
        owner = None
        if static:
            dc = self.stage.source[1]
            chunks = static_partition(dc.paths, self.engine.cluster.nodes)
            owner = {path: node for node, chunk in chunks.items() for path in chunk}
        for p in range(self.stage.num_partitions):
            static_node = None
            if owner is not None:
                static_node = owner[self.stage.source[1].paths[p]]
            pending.push(PendingTask(seq=p, partition=p, preferred=prefs[p],
                                     enqueue_ms=now, static_node=static_node))
        return pending

    def run(self) -> List[list]:
        if self.stage.num_partitions == 0:
            return []
        threads = []
        for slot in self.slots:
            if slot.dead:
                continue
            t = threading.Thread(target=self._worker, args=(slot,), daemon=True)
            threads.append(t)
            t.start()
        for t in threads:
            t.join()
        if self.abort is not None:
            raise self.abort
        if self.done != self.stage.num_partitions:
            raise JobFailed(f"stage {self.sidx} incomplete: {self.done} of "
                            f"{self.stage.num_partitions} partitions", stage=self.sidx)
        return [r if r is not None else [] for r in self.results]

    def _finished(self) -> bool:
        return self.abort is not None or self.done == self.stage.num_partitions

    def _worker(self, slot: _Slot):
        engine = self.engine
        while True:
            with self.cond:
                task = None
                while task is None:
                    if self._finished() or slot.dead:
                        self.cond.notify_all()
                        return
                    now = engine._now_ms()
                    task, level = assign_next(slot.node, self.pending, now,
                                              engine.policy, engine.cluster.racks)
                    if task is not None:
                        break
                    if self.in_flight == 0 and len(self.pending) > 0 \
                            and not self._anyone_can_serve():
                        self.abort = JobFailed(
                            f"stage {self.sidx}: pending tasks unreachable "
                            f"(dead slots)", stage=self.sidx)
                        self.cond.notify_all()
                        return
                    timeout = None
                    if level != math.inf:
                        timeout = max((level - now) / 1000.0, 0.001)
                    self.cond.wait(timeout)
                pidx = task.partition
                self.attempts[pidx] += 1
                attempt = self.attempts[pidx]
                self.in_flight += 1
                kill = (not self.kill_fired and
                        self.fault_plan.kill_slot_task == (self.sidx, pidx))
                if kill:
                    self.kill_fired = True
                    slot.dead = True

            start = engine._now_ms()
            ok = True
            err: Optional[BaseException] = None
            result = None
            input_local = None
            if kill:
                ok = False
                err = InjectedFault(f"worker slot {slot.index} killed on stage "
                                    f"{self.sidx} partition {pidx}")
            else:
                try:
                    result, input_local = engine._run_task(
                        self.stage, self.sidx, pidx, slot.node, attempt,
                        self.fault_plan)
                except BaseException as e:  # noqa: BLE001 - task errors attributed below
                    ok = False
                    err = e
            end = engine._now_ms()

            with self.cond:
                engine.tasks_executed += 1
                engine._task_seq += 1
                self.metrics.records.append(TaskRecord(
                    task_id=engine._task_seq, stage=self.sidx, partition=pidx,
                    node=slot.node, locality=self._level(level, input_local),
                    start_ms=start, end_ms=end, attempt=attempt, ok=ok,
                    is_input=self.is_input,
                    input_local=input_local if self.is_input else None))
                self.in_flight -= 1
                if ok:
                    self.results[pidx] = result
                    self.done += 1
                elif attempt > RETRY_BUDGET:
                    job_err = JobFailed(
                        f"task failed after {attempt} attempts "
                        f"(stage {self.sidx}, partition {pidx}): {err}",
                        stage=self.sidx, partition=pidx)
                    job_err.__cause__ = err
                    self.abort = job_err
                else:
                    self.pending.requeue(task, engine._now_ms())
                self.cond.notify_all()
                if slot.dead:
                    return

    def _anyone_can_serve(self) -> bool:
        alive = [s for s in self.slots if not s.dead]
        if not alive:
            return False
        if not self.pending.static:
            return True
        nodes = {s.node for s in alive}
        for node, q in self.pending.by_node.items():
            if any(not t.assigned for t in q) and node in nodes:
                return True
        return False

    def _level(self, level: str, input_local) -> str:
        if not self.is_input:
            return LOCALITY_PROCESS
        if input_local:
            return LOCALITY_NODE
        return LOCALITY_ANY
