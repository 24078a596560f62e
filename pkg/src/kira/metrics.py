"""Per-task run records and derived scheduling metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

LOCALITY_PROCESS = "PROCESS"
LOCALITY_NODE = "NODE"
LOCALITY_RACK = "RACK"
LOCALITY_ANY = "ANY"


@dataclass
class TaskRecord:
    """One task attempt.

    is_input marks tasks that read job input files; input_local says whether
    the read hit a replica on the executing node (None for non-input tasks).
    """

    task_id: int
    stage: int
    partition: int
    node: str
    locality: str
    start_ms: float
    end_ms: float
    attempt: int = 1
    ok: bool = True
    is_input: bool = False
    input_local: Optional[bool] = None

    def line(self) -> str:
        return "\t".join([
            str(self.task_id), str(self.stage), str(self.partition), self.node,
            self.locality, "%.3f" % self.start_ms, "%.3f" % self.end_ms])


RECORD_COLUMNS = ("task_id", "stage", "partition", "node", "locality_level",
                  "start_ms", "end_ms")


@dataclass
class RunMetrics:
    """All attempts of one run plus derived scheduling statistics."""

    records: List[TaskRecord] = field(default_factory=list)

    def ok_records(self) -> List[TaskRecord]:
        return [r for r in self.records if r.ok]

    @property
    def tasks(self) -> int:
        return len(self.ok_records())

    @property
    def makespan_ms(self) -> float:
        recs = self.records
        if not recs:
            return 0.0
        return max(r.end_ms for r in recs) - min(r.start_ms for r in recs)

    @property
    def hit_ratio(self) -> float:
        """Fraction of input tasks whose read was node-local.

        1.0 when the run had no input-reading tasks (nothing to miss).
        """
        inputs = [r for r in self.ok_records() if r.is_input]
        if not inputs:
            return 1.0
        return sum(1 for r in inputs if r.input_local) / len(inputs)

    def per_node(self) -> List[dict]:
        nodes = {}
        for r in self.ok_records():
            row = nodes.setdefault(r.node, {"node": r.node, "tasks": 0, "local": 0})
            row["tasks"] += 1
            if r.is_input and r.input_local:
                row["local"] += 1
        return [nodes[k] for k in sorted(nodes)]

    def summary(self, policy: Optional[dict] = None) -> dict:
        return {
            "hit_ratio": self.hit_ratio,
            "makespan_ms": self.makespan_ms,
            "tasks": self.tasks,
            "per_node": self.per_node(),
            "policy": policy or {},
        }

    def records_text(self) -> str:
        """Line-delimited final successful attempts, one task per line."""
        lines = ["\t".join(RECORD_COLUMNS)]
        lines += [r.line() for r in self.ok_records()]
        return "\n".join(lines) + "\n"

    def write(self, metrics_path, records_path=None, policy: Optional[dict] = None):
        summary = self.summary(policy)
        if records_path is not None:
            summary["records_file"] = str(records_path)
            with open(records_path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.records_text())
        with open(metrics_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
