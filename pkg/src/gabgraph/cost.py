"""Analytical memory and traffic model for replicated-vertex graph engines.

All results are model estimates. The off-replica vertex estimate assumes a
random graph; the per-system rows are asymptotic expressions evaluated with
unit constants, not byte-accurate predictions.
"""

import math
from dataclasses import dataclass

SIZE_VERTEX_MSG = 20      # f64 value + f64 message + u32 out-degree
SIZE_ID_VERTEX_MSG = 24   # the same plus a u32 vertex id

SYSTEMS = ("pregel+", "powergraph", "graphd", "chaos", "graphh")
ROW_KEYS = ("ram_vertex", "ram_edge", "ram_msg", "network", "disk_read", "disk_write")


@dataclass
class WorkloadParams:
    vertices: float
    edges: float
    servers: int = 1
    workers: int = 1
    tiles: int | None = None
    size_vertex_msg: float = SIZE_VERTEX_MSG
    size_id_vertex_msg: float = SIZE_ID_VERTEX_MSG
    size_tile: float = 0.0
    replication: float = 1.0
    eta: float | None = None
    beta: float = 1.0

    def __post_init__(self):
        for name in ("vertices", "edges", "servers", "workers", "size_tile", "replication", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.tiles is None:
            self.tiles = max(self.servers, 1)

    @property
    def avg_degree(self):
        return self.edges / self.vertices if self.vertices else 0.0

    @property
    def combining(self):
        if self.eta is not None:
            return self.eta
        return combining_ratio(self.avg_degree, self.workers, self.servers)


def memory_aa(p):
    """Bytes per server when every server replicates all vertices in dense arrays."""
    return p.size_vertex_msg * p.vertices + p.size_tile * p.workers


def expected_od_vertices(vertices, avg_degree, servers, capped=False):
    """Upper bound on vertices a server touches when keeping only those its tiles use.

    ``(1 - exp(-d/N)) |V|`` expected sources plus ``|V|/N`` owned targets. The
    bound can exceed |V| (targets may double as sources); ``capped`` clips it.
    """
    if servers < 1:
        raise ValueError("servers must be >= 1")
    bound = -math.expm1(-avg_degree / servers) * vertices + vertices / servers
    return min(bound, vertices) if capped else bound


def memory_od(p, od_vertices=None):
    if od_vertices is None:
        od_vertices = expected_od_vertices(p.vertices, p.avg_degree, p.servers)
    return p.size_id_vertex_msg * od_vertices + p.size_tile * p.workers


def combining_ratio(avg_degree, workers, servers=1):
    """Fraction of messages left after per-worker sender-side combining."""
    tn = workers * servers
    if tn < 1:
        raise ValueError("workers * servers must be >= 1")
    if avg_degree <= 0:
        return 1.0
    x = avg_degree / tn
    return min(1.0, -math.expm1(-x) / x)


def od_crossover(vertices, edges, max_servers=4096, **sizes):
    """Smallest N at which the on-demand estimate drops below full replication."""
    for n in range(1, max_servers + 1):
        p = WorkloadParams(vertices, edges, servers=n, **sizes)
        if memory_od(p) < memory_aa(p):
            return n
    return None


def table3_row(system, p):
    """Per-superstep resource expressions of one system, unit constants."""
    V, E, N, P = p.vertices, p.edges, p.servers, p.tiles
    M, eta, beta = p.replication, p.combining, p.beta
    rows = {
        "pregel+": (V, E, eta * E + V, eta * E, 0.0, 0.0),
        "powergraph": (M * V, 2 * E, M * V, 2 * M * V, 0.0, 0.0),
        "graphd": (V, 1.0, 1.0, eta * E, 2 * E, E),
        "chaos": (N * V / P, 1.0, 1.0, 3 * E + 3 * V, 2 * E + 2 * V, E + V),
        "graphh": (N * V, N * E / P, N * V, N * V, beta * E, 0.0),
    }
    try:
        values = rows[system.lower()]
    except KeyError:
        raise ValueError(f"unknown system {system!r}; expected one of {', '.join(SYSTEMS)}") from None
    return dict(zip(ROW_KEYS, (float(v) for v in values)))
