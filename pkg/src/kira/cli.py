"""Command-line front end.

Subcommands:
  kira ingest    place a FITS directory into the simulated block store
  kira extract   run the extraction pipeline, write catalog + metrics
  kira bench     sweep worker counts (real runs) or cluster configs (simulator)
  kira simulate  scheduler study over synthetic tasks (no extraction)

Exit codes: 0 ok, 1 input error, 2 execution failure.
"""

from __future__ import annotations

import argparse
import sys

from .blockmap import BlockMap, ClusterModel
from .errors import JobFailed, KiraError, NoSuchDirectory
from .pipeline import PipelineConfig, run_extract
from .sched import POLICY_DELAY, POLICY_STATIC, SchedPolicy, SimTaskModel, simulate

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_EXEC = 2


def _add_cluster_flags(p: argparse.ArgumentParser):
    p.add_argument("--mode", choices=("local", "simdfs", "sharedfs"), default="local",
                   help="storage model: plain local FS, simulated DFS with "
                        "locality, or shared FS without locality")
    p.add_argument("--nodes", type=int, default=1, help="simulated node count")
    p.add_argument("--cores", type=int, default=4, help="worker slots per node")
    p.add_argument("--replication", type=int, default=2, help="replica count")
    p.add_argument("--seed", type=int, default=0, help="placement/noise seed")
    p.add_argument("--skew", type=float, default=0.0,
                   help="bias of first replica toward node 0 (weight 1+skew)")
    p.add_argument("--policy", choices=(POLICY_DELAY, POLICY_STATIC),
                   default=POLICY_DELAY)
    p.add_argument("--wait-node-ms", type=float, default=0.0)
    p.add_argument("--wait-process-ms", type=float, default=0.0)
    p.add_argument("--wait-rack-ms", type=float, default=0.0)


def _add_extract_flags(p: argparse.ArgumentParser):
    p.add_argument("--thresh", type=float, default=5.0,
                   help="detection threshold in local-rms units")
    p.add_argument("--minarea", type=int, default=5)
    p.add_argument("--cellsize", type=int, default=64)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--mask-scale", type=float, default=3.0)
    p.add_argument("--clip-sigma", type=float, default=3.0)
    p.add_argument("--clip-iters", type=int, default=5)
    p.add_argument("--subpix", type=int, default=5)


def _config(args, input_dir, output="") -> PipelineConfig:
    return PipelineConfig(
        input_dir=str(input_dir), output_path=str(output), mode=args.mode,
        nodes=args.nodes, cores_per_node=args.cores,
        replication=args.replication, seed=args.seed, skew=args.skew,
        thresh_sigma=args.thresh, min_area=args.minarea,
        cell_size=args.cellsize, iterations=args.iterations,
        mask_scale=args.mask_scale, clip_sigma=args.clip_sigma,
        clip_iters=args.clip_iters, subpix=args.subpix, policy=args.policy,
        wait_process_ms=args.wait_process_ms, wait_node_ms=args.wait_node_ms,
        wait_rack_ms=args.wait_rack_ms)


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_extract(args) -> int:
    cfg = _config(args, args.input, args.output)
    try:
        run = run_extract(cfg)
    except NoSuchDirectory as e:
        print(f"kira extract: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except JobFailed as e:
        print(f"kira extract: job failed: {e}", file=sys.stderr)
        return EXIT_EXEC
    if run.parse_errors:
        for path, msg in run.parse_errors:
            print(f"MALFORMED {path}: {msg}", file=sys.stderr)
        print(f"kira extract: {len(run.parse_errors)} of {run.file_count} "
              f"files unparseable", file=sys.stderr)
        return EXIT_INPUT
    _write_text(args.output, run.catalog)
    metrics_path = args.output + ".metrics.json"
    records_path = args.output + ".tasks.tsv"
    run.metrics.write(metrics_path, records_path, policy=run.policy)
    rows = run.catalog.count("\n") - 1
    print(f"extracted {rows} objects from {run.file_count} files "
          f"in {run.wall_s:.2f}s (hit_ratio {run.metrics.hit_ratio:.3f}) "
          f"-> {args.output}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    try:
        cluster = ClusterModel.make(args.nodes, cores_per_node=args.cores)
        import warnings
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            bm = BlockMap.ingest(args.input, cluster, args.replication,
                                 seed=args.seed, skew=args.skew)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
    except NoSuchDirectory as e:
        print(f"kira ingest: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    _write_text(args.output, bm.to_manifest())
    print(f"ingested {len(bm.entries)} files at replication {bm.replication} "
          f"-> {args.output}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cluster = ClusterModel.make(args.nodes, cores_per_node=args.cores)
    paths = [f"task{i:06d}" for i in range(args.tasks)]
    bm = BlockMap.place(paths, cluster, args.replication,
                        seed=args.seed, skew=args.skew)
    policy = SchedPolicy(kind=args.policy, wait_process_ms=args.wait_process_ms,
                         wait_node_ms=args.wait_node_ms,
                         wait_rack_ms=args.wait_rack_ms)
    model = SimTaskModel(local_cost_ms=args.task_ms,
                         remote_cost_ms=args.task_ms * args.remote_penalty,
                         sigma=args.jitter)
    metrics = simulate(cluster, bm, policy, model, seed=args.seed)
    if args.output:
        metrics.write(args.output, args.output + ".tasks.tsv",
                      policy=policy.to_dict())
    print(f"simulated {metrics.tasks} tasks on {args.nodes} nodes x "
          f"{args.cores} slots: hit_ratio {metrics.hit_ratio:.4f}, "
          f"makespan {metrics.makespan_ms:.0f} ms")
    return EXIT_OK


def _bench_rows_real(args) -> list:
    slot_counts = [int(s) for s in args.slots.split(",")]
    rows = []
    base = None
    for slots in slot_counts:
        args.cores = slots
        cfg = _config(args, args.input)
        run = run_extract(cfg)
        if run.parse_errors:
            raise KiraError(f"{len(run.parse_errors)} unparseable files")
        makespan = run.metrics.makespan_ms
        if base is None:
            base = makespan
        rows.append({"config": f"slots={slots}", "nodes": args.nodes,
                     "slots": slots, "policy": args.policy,
                     "makespan_ms": round(makespan, 3),
                     "hit_ratio": run.metrics.hit_ratio,
                     "speedup": round(base / makespan, 3) if makespan else 0.0})
    return rows


def _bench_rows_sim(args) -> list:
    rows = []
    node_counts = [int(s) for s in args.sim_nodes.split(",")]
    policies = args.policies.split(",")
    for nodes in node_counts:
        cluster = ClusterModel.make(nodes, cores_per_node=args.cores)
        paths = [f"task{i:06d}" for i in range(args.tasks)]
        bm = BlockMap.place(paths, cluster, args.replication, seed=args.seed,
                            skew=args.skew)
        for pol in policies:
            policy = SchedPolicy(kind=pol, wait_node_ms=args.wait_node_ms)
            model = SimTaskModel(local_cost_ms=args.task_ms,
                                 remote_cost_ms=args.task_ms * args.remote_penalty,
                                 sigma=args.jitter)
            metrics = simulate(cluster, bm, policy, model, seed=args.seed)
            rows.append({"config": f"nodes={nodes};policy={pol}", "nodes": nodes,
                         "slots": cluster.cores_per_node, "policy": pol,
                         "makespan_ms": round(metrics.makespan_ms, 3),
                         "hit_ratio": metrics.hit_ratio, "speedup": ""})
    return rows


def cmd_bench(args) -> int:
    try:
        rows = _bench_rows_sim(args) if args.simulate else _bench_rows_real(args)
    except NoSuchDirectory as e:
        print(f"kira bench: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except JobFailed as e:
        print(f"kira bench: job failed: {e}", file=sys.stderr)
        return EXIT_EXEC
    header = ["config", "nodes", "slots", "policy", "makespan_ms", "hit_ratio",
              "speedup"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(r[c]) for c in header))
    table = "\n".join(lines) + "\n"
    if args.output:
        _write_text(args.output, table)
    sys.stdout.write(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kira",
                                 description="Source extraction over a "
                                             "locality-aware many-task engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract sources from a FITS directory")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="catalog CSV path; metrics "
                   "land beside it as <output>.metrics.json / .tasks.tsv")
    _add_cluster_flags(p)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("ingest", help="write a block-map manifest for a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="manifest path")
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("bench", help="scaling and scheduling sweeps")
    p.add_argument("--input", help="FITS directory (real mode)")
    p.add_argument("--output", help="CSV table path")
    p.add_argument("--slots", default="1,2,4,8",
                   help="comma list of worker counts (real mode)")
    p.add_argument("--simulate", action="store_true",
                   help="sweep the scheduler simulator instead of real runs")
    p.add_argument("--sim-nodes", default="8,16,32",
                   help="comma list of node counts (simulator mode)")
    p.add_argument("--policies", default="delay,static",
                   help="comma list of policies (simulator mode)")
    p.add_argument("--tasks", type=int, default=11150,
                   help="synthetic task count (simulator mode)")
    p.add_argument("--task-ms", type=float, default=100.0)
    p.add_argument("--remote-penalty", type=float, default=1.15)
    p.add_argument("--jitter", type=float, default=0.2)
    _add_cluster_flags(p)
    _add_extract_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="scheduler study over synthetic tasks")
    p.add_argument("--tasks", type=int, default=11150)
    p.add_argument("--task-ms", type=float, default=100.0)
    p.add_argument("--remote-penalty", type=float, default=1.15)
    p.add_argument("--jitter", type=float, default=0.2)
    p.add_argument("--output", help="metrics JSON path")
    _add_cluster_flags(p)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KiraError as e:
        print(f"kira: error: {e}", file=sys.stderr)
        return EXIT_EXEC


if __name__ == "__main__":
    sys.exit(main())
