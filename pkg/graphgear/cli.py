import argparse
import logging
import sys

from graphgear.algorithms import ExecutionMode
from graphgear.config import HIERARCHY_PATH, PROFILE_PATH, configure_logging
from graphgear.contention import calibrate, detect_hierarchy, load_hierarchy, thread_grid
from graphgear.errors import GraphGearError
from graphgear.estimators import select_statistics_mode
from graphgear.graph import RmatParams, generate_rmat, load_edge_list, write_edge_list
from graphgear.harness import (Algorithm, BenchmarkSpec, build_runtime, load_dataset, load_matrix, raw_frame,
                               run_matrix, run_sessions, summary_frame, trace_frame, write_csv)

logger = logging.getLogger(__name__)


def _calibrate(args) -> int:
    hierarchy_path = args.hierarchy or HIERARCHY_PATH
    hierarchy = load_hierarchy(hierarchy_path) if hierarchy_path else detect_hierarchy()
    threads = thread_grid(args.threads_max) if args.threads_max else None
    table = calibrate(hierarchy, threads=threads, profile_path=args.profile, counter_width=args.counter_width,
                      force=args.force)
    print(f"profile {args.profile}: {len(table.sizes)} sizes x {len(table.threads)} thread counts")
    return 0


def _rmat(args) -> int:
    params = RmatParams(scale=args.scale, edge_factor=args.edge_factor, a=args.a, b=args.b, c=args.c,
                        d=round(1.0 - args.a - args.b - args.c, 12), seed=args.seed)
    graph = generate_rmat(params)
    write_edge_list(graph, args.out, comment=f"rmat scale={args.scale} edge_factor={args.edge_factor} seed={args.seed}")
    return 0


def _descriptor_paths(entries: list[str] | None) -> dict[str, str]:
    paths = {}
    for entry in entries or ():
        algo, sep, path = entry.partition("=")
        if not sep or not path:
            raise ValueError(f"--descriptor expects ALGO=FILE, got {entry!r}")
        paths[Algorithm(algo).value] = path
    return paths


def _run(args) -> int:
    spec = BenchmarkSpec(algo=Algorithm(args.algo), mode=ExecutionMode(args.mode), dataset=args.graph,
                         sessions=args.sessions, seed=args.seed, runs_per_session=args.runs_per_session)
    runtime = build_runtime(spec.mode, args.profile, args.threads, args.cost_config,
                            _descriptor_paths(args.descriptor))
    graph = load_dataset(args.graph)
    try:
        report = run_sessions(spec, graph, runtime, keep_iterations=args.trace is not None, show_progress=True)
    finally:
        if runtime.pool is not None:
            runtime.pool.shutdown()
    summary = summary_frame([report])
    if args.csv:
        write_csv(summary, args.csv)
    else:
        print(summary.to_csv(index=False), end="")
    if args.raw:
        write_csv(raw_frame(report), args.raw)
    if args.trace:
        write_csv(trace_frame(report), args.trace)
    return 0


def _bench(args) -> int:
    matrix = load_matrix(args.matrix)
    frame = run_matrix(matrix)
    out = args.csv or matrix.csv
    if out:
        write_csv(frame, out)
    else:
        print(frame.to_csv(index=False), end="")
    return 1 if frame["error"].astype(bool).all() else 0


def _stats(args) -> int:
    graph = load_edge_list(args.graph)
    stats = graph.stats
    print(f"vertices        {stats.vertex_count}")
    print(f"edges           {stats.edge_count}")
    print(f"mean out-degree {stats.mean_out_degree:.4f}")
    print(f"max out-degree  {stats.max_out_degree}")
    print(f"degree ratio    {stats.degree_ratio:.4f}")
    print(f"reachable       {stats.reachable_count}")
    print(f"statistics mode {select_statistics_mode(stats).value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphgear", description="Adaptive parallel graph query engine")
    parser.add_argument("--log-level", default=None, help="logging level (default from GRAPHGEAR_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="measure atomic-update latency and write the machine profile")
    p.add_argument("--profile", default=PROFILE_PATH)
    p.add_argument("--threads-max", type=int, default=None)
    p.add_argument("--counter-width", type=int, choices=(1, 2, 4, 8), default=4)
    p.add_argument("--hierarchy", default=None, help="NAME=capacity file describing the cache levels")
    p.add_argument("--force", action="store_true", help="re-measure even if the profile exists")
    p.set_defaults(handler=_calibrate)

    p = sub.add_parser("rmat", help="generate an RMAT edge list")
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--edge-factor", type=float, default=16.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-a", type=float, default=0.57)
    p.add_argument("-b", type=float, default=0.19)
    p.add_argument("-c", type=float, default=0.19)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_rmat)

    p = sub.add_parser("run", help="run one benchmark configuration")
    p.add_argument("--algo", choices=[a.value for a in Algorithm], required=True)
    p.add_argument("--mode", choices=[m.value for m in ExecutionMode], required=True)
    p.add_argument("--graph", required=True, help="edge-list file or rmat:SCALE[:EDGE_FACTOR[:SEED]]")
    p.add_argument("--sessions", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs-per-session", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--profile", default=None)
    p.add_argument("--cost-config", default=None, help="KEY=value file overriding cost-model constants")
    p.add_argument("--descriptor", action="append", default=None, metavar="ALGO=FILE",
                   help="KEY=value file overriding an algorithm's operation counts (repeatable)")
    p.add_argument("--csv", default=None)
    p.add_argument("--trace", default=None)
    p.add_argument("--raw", default=None)
    p.set_defaults(handler=_run)

    p = sub.add_parser("bench", help="sweep a benchmark matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(handler=_bench)

    p = sub.add_parser("stats", help="print graph statistics")
    p.add_argument("--graph", required=True)
    p.set_defaults(handler=_stats)
    return parser


def cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level.upper())
    try:
        return args.handler(args)
    except (GraphGearError, ValueError, OSError) as e:
        logger.error(f"graphgear {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    configure_logging()
    sys.exit(cli())


if __name__ == "__main__":
    main()
