"""BSP superstep driver for the gather-apply-broadcast model.

Every server holds a full replica of the vertex arrays. Tile ``t`` belongs to
server ``t mod N``; each of the server's ``T`` workers takes the next tile
from a shared queue, gathers over the tile's in-edges, applies, and hands the
changed targets to the communicator. After the barrier each server copies
the flagged slots into the value array.
"""

import copy
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cache import CacheConfig, CacheStats, EdgeCache
from .comm import Codec, Communicator, LocalHub, SparsityPolicy, DEFAULT_TIMEOUT
from .errors import ConsistencyError, ProgramError

log = logging.getLogger(__name__)

SKIP_FULL_RATIO = 0.5


@dataclass
class EngineConfig:
    num_servers: int = 1
    workers_per_server: int = 1
    max_supersteps: int = 20
    comm: SparsityPolicy = field(default_factory=SparsityPolicy)
    codec: Codec = Codec.FAST
    cache: CacheConfig = field(default_factory=CacheConfig)
    skip: bool = True
    barrier_timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self):
        if self.num_servers < 1 or self.workers_per_server < 1 or self.max_supersteps < 1:
            raise ValueError("num_servers, workers_per_server and max_supersteps must be >= 1")


@dataclass
class VertexStateArrays:
    """Dense per-vertex arrays of one server's replica."""

    value: np.ndarray
    updated_value: np.ndarray
    updated_flags: np.ndarray
    prev_updated_flags: np.ndarray
    out_degree: np.ndarray | None = None

    @classmethod
    def allocate(cls, num_vertices):
        return cls(
            value=np.zeros(num_vertices),
            updated_value=np.zeros(num_vertices),
            updated_flags=np.zeros(num_vertices, dtype=bool),
            prev_updated_flags=np.ones(num_vertices, dtype=bool),
        )

    def apply_updates(self):
        """Commit flagged slots, rotate the flag vectors; returns the number committed."""
        flags = self.updated_flags
        self.value[flags] = self.updated_value[flags]
        count = int(np.count_nonzero(flags))
        self.prev_updated_flags, self.updated_flags = flags, self.prev_updated_flags
        self.updated_flags[:] = False
        return count


@dataclass
class SuperstepReport:
    superstep: int
    updated_vertex_count: int
    tiles_processed: int
    tiles_skipped: int
    cache: CacheStats
    bytes_broadcast: int
    wall_time: float
    server: int = 0

    def as_dict(self):
        d = asdict(self)
        d["cache"] = dict(d["cache"], miss_ratio=self.cache.miss_ratio)
        return d

    def line(self):
        c = self.cache
        return (f"server={self.server} superstep={self.superstep} "
                f"updated={self.updated_vertex_count} processed={self.tiles_processed} "
                f"skipped={self.tiles_skipped} hits={c.hits} misses={c.misses} "
                f"disk_bytes={c.disk_bytes_read} bcast_bytes={self.bytes_broadcast} "
                f"time={self.wall_time:.4f}s")


@dataclass
class RunResult:
    values: np.ndarray
    reports: list
    server_reports: list = field(default_factory=list)

    @property
    def supersteps(self):
        return len(self.reports)


def assign_tiles(tile_count, num_servers):
    """Tile ``t`` goes to server ``t mod num_servers``."""
    if num_servers < 1:
        raise ValueError("num_servers must be >= 1")
    return [list(range(j, tile_count, num_servers)) for j in range(num_servers)]


def should_process(descriptor, prev_updated_flags, updated_ids=None):
    """Whether any vertex updated last superstep may be a source in the tile.

    Queries the tile's bloom filter with each updated id. When more than half
    of all vertices changed, the tile is processed without querying.
    """
    if updated_ids is None:
        updated_ids = np.flatnonzero(prev_updated_flags)
    if updated_ids.size == 0:
        return False
    if updated_ids.size > SKIP_FULL_RATIO * len(prev_updated_flags):
        return True
    return descriptor.bloom.contains_any(updated_ids)


def _locate_failure(tile, states, program, exc):
    for i in range(tile.num_targets):
        v = tile.first_target + i
        try:
            sources, weights = tile.in_edges(i)
            program.apply(program.gather(v, sources, weights, states), states.value[v])
        except Exception as inner:
            return ProgramError(tile.tile_id, v, inner)
    return ProgramError(tile.tile_id, None, exc)


def process_tile(tile, states, program):
    """Gather+apply every target of ``tile``; returns (changed ids, new values)."""
    lo, hi = tile.first_target, tile.first_target + tile.num_targets
    old = states.value[lo:hi]
    try:
        cand = program.apply_tile(program.gather_tile(tile, states), old)
    except Exception as exc:
        raise _locate_failure(tile, states, program, exc) from exc
    changed = np.flatnonzero(cand != old)
    return changed + lo, cand[changed]


class Server:
    """One logical server: replica arrays, edge cache, T workers, communicator."""

    def __init__(self, rank, dataset, program, config, transport):
        self.rank = rank
        self.dataset = dataset
        self.program = program
        self.config = config
        self.descriptors = dataset.descriptors
        self.tiles = assign_tiles(dataset.manifest.tile_count, config.num_servers)[rank]
        self.cache = EdgeCache(dataset, config.cache)
        self.comm = Communicator(transport, config.comm, config.codec, config.barrier_timeout)
        self.states = VertexStateArrays.allocate(dataset.vertex_count)
        self.reports = []

    def _handle(self, t, superstep, prev, updated_ids):
        desc = self.descriptors[t]
        if self.config.skip and not should_process(desc, prev, updated_ids):
            return None
        tile = self.cache.get_tile(t)
        ids, values = process_tile(tile, self.states, self.program)
        sent = 0
        if len(ids):
            self.states.updated_value[ids] = values
            self.states.updated_flags[ids] = True
            sent = self.comm.broadcast_updates(superstep, desc, ids, values)
        return len(ids), sent

    def run_superstep(self, superstep, pool=None):
        start = time.perf_counter()
        before = self.cache.stats()
        prev = self.states.prev_updated_flags
        updated_ids = np.flatnonzero(prev) if self.config.skip else None
        args = (superstep, prev, updated_ids)
        if pool is None:
            results = [self._handle(t, *args) for t in self.tiles]
        else:
            results = list(pool.map(lambda t: self._handle(t, *args), self.tiles))
        done = [r for r in results if r is not None]
        local = sum(n for n, _ in done)
        total = self.comm.barrier(superstep, local, self.states)
        committed = self.states.apply_updates()
        if committed != total:
            raise ConsistencyError(f"server {self.rank}, superstep {superstep}: committed "
                                   f"{committed} updates but the global count is {total}")
        report = SuperstepReport(
            superstep=superstep, updated_vertex_count=total, tiles_processed=len(done),
            tiles_skipped=len(results) - len(done), cache=self.cache.stats() - before,
            bytes_broadcast=sum(s for _, s in done), wall_time=time.perf_counter() - start,
            server=self.rank)
        self.reports.append(report)
        log.debug(report.line())
        return report

    def run(self):
        self.program.init(self.states, self.dataset)
        T = self.config.workers_per_server
        pool = ThreadPoolExecutor(max_workers=T, thread_name_prefix=f"s{self.rank}-w") if T > 1 else None
        try:
            for s in range(1, self.config.max_supersteps + 1):
                if self.run_superstep(s, pool).updated_vertex_count == 0:
                    break
        finally:
            if pool is not None:
                pool.shutdown()
        return RunResult(self.states.value, self.reports)


def run(config, dataset, program, transport=None):
    """Run ``program`` to convergence or ``config.max_supersteps``.

    Without ``transport`` all ``config.num_servers`` servers run in this
    process over an in-process hub. With a transport (e.g. TCP), this process
    is the single server ``transport.rank``.
    """
    if transport is not None:
        server = Server(transport.rank, dataset, program, config, transport)
        try:
            return server.run()
        except BaseException as exc:
            transport.abort(f"rank {transport.rank} failed: {exc}")
            raise

    hub = LocalHub(config.num_servers)
    servers = [Server(r, dataset, copy.deepcopy(program), config, hub.endpoints[r])
               for r in range(config.num_servers)]
    if len(servers) == 1:
        res = servers[0].run()
        return RunResult(res.values, res.reports, [res.reports])

    results = [None] * len(servers)
    errors = []

    def target(r):
        try:
            results[r] = servers[r].run()
        except BaseException as exc:
            errors.append(exc)
            hub.abort(f"server {r} failed: {exc}")

    threads = [threading.Thread(target=target, args=(r,), name=f"server-{r}") for r in range(len(servers))]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        primary = [e for e in errors if "run aborted" not in str(e)]
        raise (primary or errors)[0]
    for r, res in enumerate(results[1:], start=1):
        if not np.array_equal(res.values, results[0].values):
            raise ConsistencyError(f"replica of server {r} diverged from server 0")
    merged = [_merge(reps) for reps in zip(*(res.reports for res in results))]
    return RunResult(results[0].values, merged, [res.reports for res in results])


def _merge(reports):
    """Cluster-wide view of one superstep's per-server reports."""
    first = reports[0]
    cache = CacheStats(**{k: sum(getattr(r.cache, k) for r in reports)
                          for k in CacheStats.__dataclass_fields__})
    return SuperstepReport(
        superstep=first.superstep, updated_vertex_count=first.updated_vertex_count,
        tiles_processed=sum(r.tiles_processed for r in reports),
        tiles_skipped=sum(r.tiles_skipped for r in reports), cache=cache,
        bytes_broadcast=sum(r.bytes_broadcast for r in reports),
        wall_time=max(r.wall_time for r in reports), server=-1)


def write_values(path, dataset, values):
    """One ``raw_id value`` line per vertex."""
    raw = dataset.raw_ids()
    with open(path, "w") as f:
        f.writelines(f"{int(v)} {x!r}\n" for v, x in zip(raw.tolist(), values.tolist()))


def write_reports(path, reports):
    with open(path, "w") as f:
        for r in reports:
            f.write(json.dumps(r.as_dict()) + "\n")
