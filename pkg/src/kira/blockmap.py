"""Simulated replicated file store.

Placement is metadata only; file bytes stay on the host filesystem. Two
modes: a locality-aware store that tracks replica nodes per file, and a
shared-filesystem mode that hides placement from callers and counts metadata
operations instead.
"""

from __future__ import annotations

import random
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

from .errors import NoSuchDirectory, UnknownPath


@dataclass
class ClusterModel:
    """Simulated cluster: node ids, slots per node, rack assignment."""

    nodes: List[str]
    cores_per_node: int = 8
    racks: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("cluster needs at least one node")
        if self.cores_per_node < 1:
            raise ValueError("cores_per_node must be >= 1")
        for n in self.nodes:
            self.racks.setdefault(n, "r0")

    @classmethod
    def make(cls, num_nodes: int, cores_per_node: int = 8) -> "ClusterModel":
        return cls(nodes=[f"n{i:02d}" for i in range(num_nodes)],
                   cores_per_node=cores_per_node)

    def slots(self):
        return [(node, k) for node in self.nodes for k in range(self.cores_per_node)]


@dataclass
class AccessRecord:
    local: bool
    node: str
    path: str


class BlockMap:
    """Replica placement for a set of files, plus access accounting."""

    def __init__(self, entries: Dict[str, List[str]], replication: int,
                 seed: int, shared_fs: bool = False, clamped: bool = False):
        self.entries = entries
        self.replication = replication
        self.seed = seed
        self.shared_fs = shared_fs
        self.clamped = clamped
        self.accesses = 0
        self.local_reads = 0
        self.metadata_ops = 0
        self._lock = threading.Lock()

    # --- construction ---

    @classmethod
    def place(cls, paths: Sequence[str], cluster: ClusterModel, replication: int,
              seed: int = 0, skew: float = 0.0) -> "BlockMap":
        """Assign replica nodes to each path (uniform random, seeded).

        skew > 0 biases the first replica toward node 0 with weight 1 + skew.
        replication is clamped to the node count (with a warning).
        """
        if replication < 1:
            raise ValueError("replication must be >= 1")
        nodes = cluster.nodes
        n = len(nodes)
        clamped = replication > n
        if clamped:
            warnings.warn(f"replication {replication} exceeds {n} nodes; clamped")
        r_eff = min(replication, n)
        rng = random.Random(seed)
        entries: Dict[str, List[str]] = {}
        for path in sorted(paths):
            if n == 1:
                entries[path] = [nodes[0]]
                continue
            total = n + skew
            u = rng.random() * total
            if u < 1.0 + skew:
                first = 0
            else:
                first = 1 + int(u - (1.0 + skew))
                first = min(first, n - 1)
            rest = [i for i in range(n) if i != first]
            picks = [first] + rng.sample(rest, r_eff - 1)
            entries[path] = [nodes[i] for i in picks]
        return cls(entries, replication=r_eff, seed=seed, clamped=clamped)

    @classmethod
    def ingest(cls, directory, cluster: ClusterModel, replication: int,
               seed: int = 0, skew: float = 0.0) -> "BlockMap":
        """Place every regular file under directory (not recursive)."""
        d = Path(directory)
        if not d.is_dir():
            raise NoSuchDirectory(str(directory))
        paths = sorted(str(p) for p in d.iterdir() if p.is_file())
        return cls.place(paths, cluster, replication, seed=seed, skew=skew)

    @classmethod
    def shared(cls, directory) -> "BlockMap":
        """Shared-FS mode: files visible, placement hidden, no locality."""
        d = Path(directory)
        if not d.is_dir():
            raise NoSuchDirectory(str(directory))
        paths = sorted(str(p) for p in d.iterdir() if p.is_file())
        return cls({p: [] for p in paths}, replication=0, seed=0, shared_fs=True)

    # --- queries ---

    def paths(self) -> List[str]:
        return sorted(self.entries)

    def locate(self, path: str) -> List[str]:
        """Replica node ids for a path; empty in shared-FS mode."""
        if path not in self.entries:
            raise UnknownPath(path)
        if self.shared_fs:
            return []
        return list(self.entries[path])

    def read_file(self, path: str, from_node: str):
        """Read file bytes as seen from a node; returns (bytes, AccessRecord)."""
        if path not in self.entries:
            raise UnknownPath(path)
        data = Path(path).read_bytes()
        with self._lock:
            self.accesses += 1
            if self.shared_fs:
                self.metadata_ops += 1
                local = False
            else:
                local = from_node in self.entries[path]
                if local:
                    self.local_reads += 1
        return data, AccessRecord(local=local, node=from_node, path=path)

    def replica_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for replicas in self.entries.values():
            for node in replicas:
                counts[node] = counts.get(node, 0) + 1
        return counts

    # --- manifest interface: "path<TAB>node1,node2" sorted by path ---

    def to_manifest(self) -> str:
        lines = [f"{p}\t{','.join(self.entries[p])}" for p in sorted(self.entries)]
        return "\n".join(lines) + "\n" if lines else ""

    @classmethod
    def from_manifest(cls, text: str) -> "BlockMap":
        entries: Dict[str, List[str]] = {}
        replication = 0
        for line in text.splitlines():
            if not line.strip():
                continue
            path, _, nodes = line.partition("\t")
            replicas = [n for n in nodes.split(",") if n]
            entries[path] = replicas
            replication = max(replication, len(replicas))
        shared = replication == 0
        return cls(entries, replication=replication, seed=0, shared_fs=shared)
