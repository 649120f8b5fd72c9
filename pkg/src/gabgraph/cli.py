"""Command-line entry point: partition, info, run, verify, cost."""

import argparse
import logging
import sys

import numpy as np

from . import cost
from .algorithms import INF, make_program, reference_pagerank, reference_sssp
from .cache import CacheConfig
from .comm import Codec, SparsityPolicy, TcpTransport
from .engine import EngineConfig, run, write_reports, write_values
from .errors import GraphError
from .ingest import DEFAULT_MEMORY_EDGES, DEFAULT_TILE_SIZE, ingest
from .tiles import Dataset

log = logging.getLogger("gabgraph")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _engine_flags(p):
    p.add_argument("--dataset", required=True)
    p.add_argument("--algo", choices=("pagerank", "sssp"), required=True)
    p.add_argument("--servers", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-supersteps", type=int, default=20)
    p.add_argument("--source", type=int, help="raw id of the SSSP source vertex")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--cache-mb", type=float, default=0.0)
    p.add_argument("--cache-mode", choices=("auto", "1", "2", "3", "4"), default="auto")
    p.add_argument("--comm", choices=("dense", "sparse", "hybrid"), default="hybrid")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--compress", choices=("none", "fast", "high"), default="fast")
    p.add_argument("--no-skip", action="store_true")
    p.add_argument("--transport", choices=("local", "tcp"), default="local")
    p.add_argument("--listen")
    p.add_argument("--peers", default="")
    p.add_argument("--rank", type=int, default=0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--report")


def build_parser():
    parser = _Parser(prog="gabgraph", description="Out-of-core gather-apply-broadcast graph engine")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("partition", help="split an edge list into CSR tiles")
    p.add_argument("edges")
    p.add_argument("--out", required=True)
    p.add_argument("--tile-size", type=int, default=DEFAULT_TILE_SIZE)
    p.add_argument("--memory-edges", type=int, default=DEFAULT_MEMORY_EDGES)
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_true", help="replace an existing dataset")

    p = sub.add_parser("info", help="print a dataset manifest")
    p.add_argument("dataset")
    p.add_argument("--tiles", action="store_true", help="also list every tile descriptor")

    p = sub.add_parser("run", help="run a vertex program")
    _engine_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="run a vertex program and compare with the reference")
    _engine_flags(p)

    p = sub.add_parser("cost", help="evaluate the memory/traffic model")
    p.add_argument("--system", required=True, choices=cost.SYSTEMS)
    p.add_argument("--vertices", type=float, required=True)
    p.add_argument("--edges", type=float, required=True)
    p.add_argument("--servers", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tiles", type=int)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eta", type=float)
    p.add_argument("--replication", type=float, default=1.0)
    p.add_argument("--tile-bytes", type=float, default=0.0)
    return parser


def cmd_partition(args):
    m = ingest(args.edges, args.out, avg_tile_size=args.tile_size,
               memory_edges=args.memory_edges, workers=args.workers, overwrite=args.force)
    print(f"vertices {m.vertex_count}\nedges {m.edge_count}\ntiles {m.tile_count}")


def cmd_info(args):
    ds = Dataset(args.dataset)
    m = ds.manifest
    rows = [
        ("format_version", m.format_version),
        ("vertices", m.vertex_count),
        ("edges", m.edge_count),
        ("weighted", str(m.weighted).lower()),
        ("avg_tile_size", m.avg_tile_size),
        ("tiles", m.tile_count),
        ("avg_degree", f"{m.avg_degree:.6g}"),
        ("tile_bytes", m.total_tile_bytes),
        ("id_map", "identity" if m.identity_ids else "idmap.bin"),
        ("splitters", " ".join(map(str, m.splitters))),
    ]
    for k, v in rows:
        print(f"{k} {v}")
    if args.tiles:
        for d in m.descriptors:
            print(f"tile {d.tile_id} first_target={d.first_target} targets={d.num_targets} "
                  f"edges={d.num_edges} bytes={d.byte_length} bloom_bits={d.bloom.num_bits}")


def _engine_setup(args):
    ds = Dataset(args.dataset)
    if args.algo == "sssp":
        if args.source is None:
            raise UsageError("--source is required for --algo sssp")
        source = ds.dense_id(args.source)
    else:
        source = 0
    transport = None
    servers = args.servers
    if args.transport == "tcp":
        peers = [p for p in args.peers.split(",") if p]
        if not args.listen:
            raise UsageError("--listen is required for --transport tcp")
        if len(peers) + 1 != servers:
            raise UsageError(f"--peers lists {len(peers)} addresses; expected --servers - 1 = {servers - 1}")
        if not 0 <= args.rank < servers:
            raise UsageError("--rank must lie in [0, --servers)")
        addresses = peers[:args.rank] + [args.listen] + peers[args.rank:]
        transport = TcpTransport(args.rank, addresses, connect_timeout=args.timeout)
    mode = args.cache_mode if args.cache_mode == "auto" else int(args.cache_mode)
    config = EngineConfig(
        num_servers=servers, workers_per_server=args.workers, max_supersteps=args.max_supersteps,
        comm=SparsityPolicy(args.comm, args.threshold), codec=Codec.parse(args.compress),
        cache=CacheConfig(int(args.cache_mb * (1 << 20)), mode), skip=not args.no_skip,
        barrier_timeout=args.timeout)
    return ds, config, make_program(args.algo, source=source, epsilon=args.epsilon), transport


def _execute(args):
    ds, config, program, transport = _engine_setup(args)
    try:
        result = run(config, ds, program, transport)
    finally:
        if transport is not None:
            transport.close()
    for r in result.reports:
        print(r.line(), file=sys.stderr)
    if args.report:
        write_reports(args.report, result.reports)
    return ds, program, result


def cmd_run(args):
    ds, _program, result = _execute(args)
    write_values(args.out, ds, result.values)


def cmd_verify(args):
    ds, program, result = _execute(args)
    src, dst, w = ds.edges()
    n = ds.vertex_count
    if args.algo == "pagerank":
        expected = np.array(reference_pagerank(n, src, dst, result.supersteps))
    else:
        expected, hops = reference_sssp(n, src, dst, w, program.source, with_hops=True)
        expected = np.array(expected)
        bound = max(hops) + 1
        print(f"supersteps {result.supersteps} (bound {bound})")
    both_inf = (expected >= INF) & (result.values >= INF)
    dev = np.where(both_inf, 0.0, np.abs(result.values - expected))
    max_dev = float(dev.max()) if dev.size else 0.0
    print(f"max_deviation {max_dev!r}")
    tol = 1e-12 if args.algo == "pagerank" else 0.0
    if max_dev > tol:
        print(f"verification FAILED: deviation above {tol}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_cost(args):
    p = cost.WorkloadParams(args.vertices, args.edges, servers=args.servers, workers=args.workers,
                            tiles=args.tiles, size_tile=args.tile_bytes,
                            replication=args.replication, eta=args.eta, beta=args.beta)
    row = cost.table3_row(args.system, p)
    print(f"# {args.system}: asymptotic estimates, unit constants")
    for k in cost.ROW_KEYS:
        print(f"{k:<12} {row[k]:.6g}")
    print(f"{'eta':<12} {p.combining:.6g}")
    if args.system == "graphh":
        od = cost.expected_od_vertices(p.vertices, p.avg_degree, p.servers)
        print(f"{'mem_aa':<12} {cost.memory_aa(p):.6g}")
        print(f"{'od_vertices':<12} {od:.6g}")
        print(f"{'od_capped':<12} {cost.expected_od_vertices(p.vertices, p.avg_degree, p.servers, True):.6g}")
        print(f"{'mem_od':<12} {cost.memory_od(p, od):.6g}")


COMMANDS = {"partition": cmd_partition, "info": cmd_info, "run": cmd_run,
            "verify": cmd_verify, "cost": cmd_cost}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gabgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GraphError, OSError, ValueError) as exc:
        print(f"gabgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
