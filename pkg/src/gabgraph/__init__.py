"""Out-of-core gather-apply-broadcast graph processing over CSR tiles."""

from .algorithms import INF, PageRank, SSSP, VertexProgram, reference_pagerank, reference_sssp
from .cache import CacheConfig, CacheMode, EdgeCache, select_mode
from .comm import Codec, SparsityPolicy
from .engine import EngineConfig, RunResult, VertexStateArrays, run
from .ingest import build_splitters, compute_degrees, ingest, ingest_arrays
from .tiles import Dataset, Tile, decode_tile, encode_tile, tile_of_vertex

__all__ = [
    "INF", "PageRank", "SSSP", "VertexProgram", "reference_pagerank", "reference_sssp",
    "CacheConfig", "CacheMode", "EdgeCache", "select_mode",
    "Codec", "SparsityPolicy",
    "EngineConfig", "RunResult", "VertexStateArrays", "run",
    "build_splitters", "compute_degrees", "ingest", "ingest_arrays",
    "Dataset", "Tile", "decode_tile", "encode_tile", "tile_of_vertex",
]
