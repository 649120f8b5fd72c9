"""Vertex programs (PageRank, SSSP) and single-threaded reference oracles.

A program supplies per-vertex ``gather``/``apply`` plus tile-wide versions of
both. The engine calls the tile-wide ones; the defaults simply loop over the
per-vertex functions, and the built-in programs override them with numpy
kernels that keep the same reduction order (ascending source id, sequential
accumulation from zero).
"""

import heapq
import sys
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, GraphError

INF = sys.float_info.max


class VertexProgram:
    name = "program"

    def init(self, states, dataset):
        """Set initial values and load any auxiliary per-vertex arrays."""

    def gather(self, v, sources, weights, states):
        raise NotImplementedError

    def apply(self, accum, old):
        raise NotImplementedError

    def gather_tile(self, tile, states):
        out = np.empty(tile.num_targets, dtype=np.float64)
        for i in range(tile.num_targets):
            sources, weights = tile.in_edges(i)
            out[i] = self.gather(tile.first_target + i, sources, weights, states)
        return out

    def apply_tile(self, accum, old):
        return np.array([self.apply(a, o) for a, o in zip(accum.tolist(), old.tolist())],
                        dtype=np.float64)


def _local_targets(tile):
    return np.repeat(np.arange(tile.num_targets), np.diff(tile.row.astype(np.int64)))


@dataclass
class PageRank(VertexProgram):
    damping: float = 0.85
    teleport: float = 0.15
    epsilon: float = 0.0

    name = "pagerank"

    def __post_init__(self):
        if abs(self.damping + self.teleport - 1.0) > 1e-12:
            raise ValueError("damping + teleport must equal 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        self.num_vertices = 0

    def init(self, states, dataset):
        n = dataset.vertex_count
        if n == 0:
            raise GraphError("PageRank needs at least one vertex")
        self.num_vertices = n
        states.value[:] = 1.0 / n
        states.out_degree = dataset.out_degree()

    def gather(self, v, sources, weights, states):
        acc = 0.0
        for u in sources:
            d = states.out_degree[u]
            if d == 0:
                raise ConsistencyError(f"source {u} of vertex {v} has out-degree 0")
            acc += states.value[u] / d
        return acc

    def apply(self, accum, old):
        new = self.teleport / self.num_vertices + self.damping * accum
        if abs(new - old) <= self.epsilon:
            return old
        return new

    def gather_tile(self, tile, states):
        col = tile.col
        deg = states.out_degree[col]
        if deg.size and deg.min() == 0:
            u = int(col[np.argmin(deg)])
            raise ConsistencyError(f"source {u} in tile {tile.tile_id} has out-degree 0")
        contrib = states.value[col] / deg
        return np.bincount(_local_targets(tile), weights=contrib, minlength=tile.num_targets)

    def apply_tile(self, accum, old):
        new = self.teleport / self.num_vertices + self.damping * accum
        if self.epsilon > 0:
            new = np.where(np.abs(new - old) <= self.epsilon, old, new)
        return new


@dataclass
class SSSP(VertexProgram):
    """Shortest distances from ``source``; edge weight 1 on unweighted datasets."""

    source: int = 0

    name = "sssp"

    def init(self, states, dataset):
        n = dataset.vertex_count
        if not 0 <= self.source < n:
            raise DomainError(f"source {self.source} outside [0, {n})")
        if dataset.manifest.weighted:
            for t in range(dataset.manifest.tile_count):
                val = dataset.load_tile(t).val
                if val.size and val.min() < 0:
                    raise DomainError(f"negative edge weight in tile {t}")
        states.value[:] = INF
        states.value[self.source] = 0.0

    def gather(self, v, sources, weights, states):
        acc = INF
        for k, u in enumerate(sources):
            s = states.value[u]
            if s < INF:
                acc = min(acc, s + (1.0 if weights is None else weights[k]))
        return acc

    def apply(self, accum, old):
        return min(accum, old)

    def gather_tile(self, tile, states):
        acc = np.full(tile.num_targets, INF)
        if tile.num_edges == 0:
            return acc
        sv = states.value[tile.col]
        with np.errstate(over="ignore"):
            cand = sv + (1.0 if tile.val is None else tile.val)
        cand = np.where(sv >= INF, INF, np.minimum(cand, INF))
        starts = tile.row[:-1].astype(np.int64)
        nonempty = tile.row[1:] > tile.row[:-1]
        acc[nonempty] = np.minimum.reduceat(cand, starts[nonempty])
        return acc

    def apply_tile(self, accum, old):
        return np.minimum(accum, old)


def make_program(name, source=0, epsilon=0.0):
    if name == "pagerank":
        return PageRank(epsilon=epsilon)
    if name == "sssp":
        return SSSP(source=source)
    raise ValueError(f"unknown algorithm {name!r}")


# -- reference oracles -----------------------------------------------------

def _in_lists(num_vertices, src, dst, weights=None):
    lists = [[] for _ in range(num_vertices)]
    ws = [1.0] * len(src) if weights is None else [float(w) for w in weights]
    for u, v, w in zip(map(int, src), map(int, dst), ws):
        lists[v].append((u, w))
    for lst in lists:
        lst.sort(key=lambda e: e[0])
    return lists


def reference_pagerank(num_vertices, src, dst, supersteps, damping=0.85, teleport=0.15):
    """``supersteps`` synchronous PageRank iterations; no dangling redistribution."""
    n = num_vertices
    if n == 0:
        return []
    outdeg = [0] * n
    for u in map(int, src):
        outdeg[u] += 1
    preds = [[u for u, _ in lst] for lst in _in_lists(n, src, dst)]
    x = [1.0 / n] * n
    for _ in range(supersteps):
        nxt = []
        for v in range(n):
            acc = 0.0
            for u in preds[v]:
                acc += x[u] / outdeg[u]
            nxt.append(teleport / n + damping * acc)
        x = nxt
    return x


def reference_sssp(num_vertices, src, dst, weights, source, with_hops=False):
    """Dijkstra over nonnegative weights (1 when ``weights`` is None).

    Unreachable vertices get INF. With ``with_hops`` also returns, per vertex,
    the fewest edges over all shortest paths (-1 when unreachable).
    """
    adj = [[] for _ in range(num_vertices)]
    ws = [1.0] * len(src) if weights is None else [float(w) for w in weights]
    for u, v, w in zip(map(int, src), map(int, dst), ws):
        if w < 0:
            raise DomainError("negative edge weight")
        adj[u].append((v, w))
    dist = [INF] * num_vertices
    hops = [-1] * num_vertices
    done = [False] * num_vertices
    dist[source], hops[source] = 0.0, 0
    heap = [(0.0, 0, source)]
    while heap:
        d, h, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in adj[u]:
            nd, nh = d + w, h + 1
            if nd < dist[v] or (nd == dist[v] and nh < hops[v]):
                dist[v], hops[v] = nd, nh
                heapq.heappush(heap, (nd, nh, v))
    return (dist, hops) if with_hops else dist
