"""Edge list -> degree arrays, splitter table, and balanced CSR tiles.

The pipeline is out-of-core: the text file is parsed in blocks and spilled as
binary chunks, so only a bounded number of edges is resident at once.

1. parse + spill, collecting the distinct raw ids
2. remap to dense ids and count degrees
3. build the splitter table from the in-degrees
4. bucket edges by groups of consecutive tiles, then sort and encode each
   group in memory (groups are processed in parallel)
"""

import logging
import math
import os
import shutil
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tiles as ts
from .bloom import BloomFilter
from .errors import CapacityError, ConsistencyError, ParseError

log = logging.getLogger(__name__)

DEFAULT_TILE_SIZE = 16_000_000
DEFAULT_MEMORY_EDGES = 8_000_000
_FLOAT_EXACT = 2 ** 53
_DIGITS_WS = b"0123456789 \t\r\n"


class EdgeChunk(NamedTuple):
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray | None


@dataclass
class DegreeArrays:
    in_degree: np.ndarray
    out_degree: np.ndarray

    @property
    def num_vertices(self):
        return len(self.in_degree)

    @property
    def num_edges(self):
        return int(self.in_degree.sum())


# -- parsing ---------------------------------------------------------------

def _iter_blocks(path, block_bytes):
    """Yield (block, first line number); blocks end on a line boundary."""
    line_no = 1
    carry = b""
    with open(path, "rb") as f:
        while True:
            data = f.read(block_bytes)
            if not data:
                if carry:
                    yield carry, line_no
                return
            data = carry + data
            cut = data.rfind(b"\n")
            if cut < 0:
                carry = data
                continue
            block, carry = data[:cut + 1], data[cut + 1:]
            yield block, line_no
            line_no += block.count(b"\n")


def _parse_slow(block, line_no, ncols):
    src, dst, wts = [], [], []
    for i, line in enumerate(block.split(b"\n")):
        fields = line.split()
        if not fields or fields[0].startswith(b"#"):
            continue
        n = line_no + i
        if ncols is None:
            ncols = len(fields)
            if ncols not in (2, 3):
                raise ParseError(f"expected 'src dst [weight]', got {len(fields)} fields", n)
        if len(fields) != ncols:
            raise ParseError(f"expected {ncols} fields, got {len(fields)}", n)
        try:
            u, v = int(fields[0]), int(fields[1])
        except ValueError:
            raise ParseError(f"vertex ids must be non-negative integers: {line.strip()!r}", n) from None
        if u < 0 or v < 0:
            raise ParseError("negative vertex id", n)
        if u >= 2 ** 64 or v >= 2 ** 64:
            raise CapacityError(f"line {n}: vertex id exceeds 64 bits")
        src.append(u)
        dst.append(v)
        if ncols == 3:
            try:
                w = float(fields[2])
            except ValueError:
                raise ParseError(f"bad weight {fields[2]!r}", n) from None
            if not math.isfinite(w):
                raise ParseError(f"non-finite weight {fields[2]!r}", n)
            wts.append(w)
    chunk = EdgeChunk(np.array(src, dtype=np.uint64), np.array(dst, dtype=np.uint64),
                      np.array(wts, dtype=np.float64) if ncols == 3 else None)
    return chunk, ncols


def _parse_fast(block, ncols):
    if b"#" in block:
        return None
    if ncols == 2 and block.translate(None, _DIGITS_WS):
        return None
    lines = block.count(b"\n") + (0 if block.endswith(b"\n") else 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        try:
            flat = np.fromstring(block, dtype=np.float64, sep=" ")
        except (DeprecationWarning, ValueError):
            return None
    if flat.size != lines * ncols:
        return None
    table = flat.reshape(lines, ncols)
    ids = table[:, :2]
    if ids.size and (ids.min() < 0 or ids.max() >= _FLOAT_EXACT or np.any(ids != np.floor(ids))):
        return None
    w = None
    if ncols == 3:
        w = table[:, 2].copy()
        if not np.all(np.isfinite(w)):
            return None
    return EdgeChunk(ids[:, 0].astype(np.uint64), ids[:, 1].astype(np.uint64), w)


def read_edge_list(path, block_bytes=16 << 20):
    """Yield EdgeChunks of raw ids from a whitespace-separated edge list.

    Lines starting with ``#`` and blank lines are skipped; LF and CRLF endings
    are accepted. The first data line fixes the column count (2 or 3).
    """
    ncols = None
    for block, line_no in _iter_blocks(path, block_bytes):
        chunk = _parse_fast(block, ncols) if ncols is not None else None
        if chunk is None:
            chunk, ncols = _parse_slow(block, line_no, ncols)
        if len(chunk.src):
            yield chunk


# -- degrees and splitters -------------------------------------------------

def _as_chunks(edges):
    if isinstance(edges, EdgeChunk):
        return [edges]
    if isinstance(edges, (list, tuple)) and edges and isinstance(edges[0], EdgeChunk):
        return edges
    if isinstance(edges, (list, tuple, np.ndarray)):
        arr = np.asarray(edges, dtype=np.float64)
        if arr.size == 0:
            return []
        arr = arr.reshape(len(arr), -1)
        w = arr[:, 2].copy() if arr.shape[1] == 3 else None
        return [EdgeChunk(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), w)]
    return edges


def compute_degrees(edges, num_vertices=None):
    """Exact in/out degrees of dense-id edges.

    ``edges`` is a sequence of ``(src, dst[, w])`` records or an iterable of
    EdgeChunks. Without ``num_vertices`` the count is max id + 1.
    """
    indeg = np.zeros(num_vertices or 0, dtype=np.int64)
    outdeg = np.zeros(num_vertices or 0, dtype=np.int64)
    for chunk in _as_chunks(edges):
        src = np.asarray(chunk.src, dtype=np.int64)
        dst = np.asarray(chunk.dst, dtype=np.int64)
        if not len(src):
            continue
        hi = int(max(src.max(), dst.max())) + 1
        if num_vertices is not None and hi > num_vertices:
            raise ConsistencyError(f"edge references vertex {hi - 1} >= |V|={num_vertices}")
        if hi > len(indeg):
            indeg = np.pad(indeg, (0, hi - len(indeg)))
            outdeg = np.pad(outdeg, (0, hi - len(outdeg)))
        n = len(indeg)
        indeg += np.bincount(dst, minlength=n)
        outdeg += np.bincount(src, minlength=n)
    return DegreeArrays(indeg, outdeg)


def build_splitters(in_degree, avg_tile_size):
    """Tile boundaries from a scan of in-degrees.

    A tile closes at the first vertex whose in-degree brings the running edge
    count to ``>= avg_tile_size``; that vertex stays in the tile it filled.
    A vertex's in-edges are never split across tiles.
    """
    if avg_tile_size < 1:
        raise ValueError("avg_tile_size must be >= 1")
    in_degree = np.asarray(in_degree, dtype=np.int64)
    nv = len(in_degree)
    cum = np.cumsum(in_degree)
    bounds = [0]
    base = 0
    while bounds[-1] < nv:
        v = int(np.searchsorted(cum, base + avg_tile_size, side="left"))
        if v >= nv:
            break
        bounds.append(v + 1)
        base = int(cum[v])
    if bounds[-1] != nv:
        bounds.append(nv)
    return bounds


# -- tile construction -----------------------------------------------------

def _group_tiles(tile_edges, budget):
    """Contiguous tile groups with at most ``budget`` edges each (one oversized tile allowed)."""
    groups, start, acc = [], 0, 0
    for t, n in enumerate(tile_edges):
        if t > start and acc + n > budget:
            groups.append((start, t))
            start, acc = t, 0
        acc += n
    if start < len(tile_edges):
        groups.append((start, len(tile_edges)))
    return groups


def _edge_dtype(weighted):
    fields = [("src", "<u4"), ("dst", "<u4")]
    if weighted:
        fields.append(("w", "<f8"))
    return np.dtype(fields)


def build_tile(tile_id, lo, hi, src, dst, weight):
    """CSR tile for targets [lo, hi) from edges already sorted by (dst, src)."""
    counts = np.bincount(dst - lo, minlength=hi - lo) if len(dst) else np.zeros(hi - lo, np.int64)
    row = np.zeros(hi - lo + 1, dtype=np.uint32)
    np.cumsum(counts, out=row[1:])
    return ts.Tile(tile_id, lo, row, src.astype(np.uint32),
                   None if weight is None else weight.astype(np.float64))


def _encode_group(group, boundaries, records, weighted):
    src = records["src"].astype(np.int64)
    dst = records["dst"].astype(np.int64)
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    w = records["w"][order] if weighted else None
    first_tile, end_tile = group
    bounds = boundaries[first_tile:end_tile + 1]
    cuts = np.searchsorted(dst, bounds, side="left")
    out = []
    for k in range(len(bounds) - 1):
        a, b = cuts[k], cuts[k + 1]
        tile = build_tile(first_tile + k, bounds[k], bounds[k + 1], src[a:b], dst[a:b],
                          None if w is None else w[a:b])
        data = ts.encode_tile(tile)
        bloom = BloomFilter.for_items(tile.col)
        out.append((tile, data, bloom))
    return out


def partition_into_tiles(edges, splitters, degrees, out_dir, weighted=None,
                         memory_edges=DEFAULT_MEMORY_EDGES, workers=None,
                         avg_tile_size=None, raw_ids=None, spill_dir=None):
    """Write tiles, degree arrays, and the manifest for dense-id ``edges`` into ``out_dir``.

    ``edges`` is re-iterable (it is scanned once here). Returns the manifest.
    """
    splitters = [int(b) for b in splitters]
    nv = degrees.num_vertices
    if splitters[-1] != nv:
        raise ConsistencyError("splitter table does not end at |V|")
    indeg_cum = np.concatenate([[0], np.cumsum(degrees.in_degree)])
    tile_edges = [int(indeg_cum[splitters[t + 1]] - indeg_cum[splitters[t]])
                  for t in range(len(splitters) - 1)]
    groups = _group_tiles(tile_edges, memory_edges)
    tile_group = np.zeros(len(tile_edges), dtype=np.int64)
    for g, (a, b) in enumerate(groups):
        tile_group[a:b] = g

    spill = None
    buffers = [[] for _ in groups]
    files = None
    dtype = None
    try:
        for chunk in _as_chunks(edges):
            if weighted is None:
                weighted = chunk.weight is not None
            if dtype is None:
                dtype = _edge_dtype(weighted)
                if len(groups) > 1:
                    spill = tempfile.mkdtemp(prefix="gab-buckets-", dir=spill_dir)
                    files = [open(os.path.join(spill, f"g{g}.bin"), "wb") for g in range(len(groups))]
            src = np.asarray(chunk.src, dtype=np.int64)
            dst = np.asarray(chunk.dst, dtype=np.int64)
            if len(src) and (max(src.max(), dst.max()) >= nv or min(src.min(), dst.min()) < 0):
                raise ConsistencyError(f"edge references a vertex outside [0, {nv})")
            rec = np.empty(len(src), dtype=dtype)
            rec["src"], rec["dst"] = src, dst
            if weighted:
                rec["w"] = chunk.weight
            if files is None:
                if len(groups):
                    buffers[0].append(rec)
                continue
            g_of = tile_group[np.searchsorted(splitters, dst, side="right") - 1]
            order = np.argsort(g_of, kind="stable")
            cuts = np.searchsorted(g_of[order], np.arange(len(groups) + 1))
            rec = rec[order]
            for g in range(len(groups)):
                if cuts[g + 1] > cuts[g]:
                    files[g].write(rec[cuts[g]:cuts[g + 1]].tobytes())
        weighted = bool(weighted)
        dtype = dtype or _edge_dtype(weighted)
        if files is not None:
            for f in files:
                f.close()

        def load(g):
            if files is None:
                return np.concatenate(buffers[g]) if buffers[g] else np.zeros(0, dtype=dtype)
            return np.fromfile(os.path.join(spill, f"g{g}.bin"), dtype=dtype)

        def work(g):
            return _encode_group(groups[g], splitters, load(g), weighted)

        with ThreadPoolExecutor(max_workers=workers or min(4, os.cpu_count() or 1)) as pool:
            results = list(pool.map(work, range(len(groups))))
    finally:
        if files is not None:
            for f in files:
                f.close()
        if spill is not None:
            shutil.rmtree(spill, ignore_errors=True)

    os.makedirs(os.path.join(out_dir, ts.TILES_DIR), exist_ok=True)
    descriptors = []
    for group in results:
        for tile, data, bloom in group:
            if tile.num_edges != tile_edges[tile.tile_id]:
                raise ConsistencyError(f"tile {tile.tile_id}: {tile.num_edges} edges, degrees say "
                                       f"{tile_edges[tile.tile_id]}")
            with open(os.path.join(out_dir, ts.TILES_DIR, ts.tile_filename(tile.tile_id)), "wb") as f:
                f.write(data)
            descriptors.append(ts.TileDescriptor(tile.tile_id, tile.first_target, tile.num_targets,
                                                 tile.num_edges, len(data), bloom))
    for name, arr in ((ts.INDEG_FILE, degrees.in_degree), (ts.OUTDEG_FILE, degrees.out_degree)):
        if len(arr) and arr.max() > ts.U32_MAX:
            raise CapacityError("a vertex degree exceeds 32 bits")
        np.asarray(arr, dtype="<u4").tofile(os.path.join(out_dir, name))
    identity = raw_ids is None
    if not identity:
        np.asarray(raw_ids, dtype="<u8").tofile(os.path.join(out_dir, ts.IDMAP_FILE))
    manifest = ts.DatasetManifest(
        vertex_count=nv, edge_count=degrees.num_edges, weighted=weighted,
        avg_tile_size=int(avg_tile_size or 0), splitters=splitters, descriptors=descriptors,
        identity_ids=identity)
    manifest.validate()
    with open(os.path.join(out_dir, ts.MANIFEST_FILE), "wb") as f:
        f.write(ts.encode_manifest(manifest))
    return manifest


class _Spill:
    """Binary spill of parsed chunks, re-iterable as dense-id EdgeChunks."""

    def __init__(self, directory):
        self.dir = directory
        self.count = 0
        self.weighted = None
        self.remap = None

    def append(self, chunk):
        if self.weighted is None:
            self.weighted = chunk.weight is not None
        np.save(os.path.join(self.dir, f"s{self.count}.npy"), chunk.src)
        np.save(os.path.join(self.dir, f"d{self.count}.npy"), chunk.dst)
        if self.weighted:
            np.save(os.path.join(self.dir, f"w{self.count}.npy"), chunk.weight)
        self.count += 1

    def __iter__(self):
        for i in range(self.count):
            src = np.load(os.path.join(self.dir, f"s{i}.npy"))
            dst = np.load(os.path.join(self.dir, f"d{i}.npy"))
            w = np.load(os.path.join(self.dir, f"w{i}.npy")) if self.weighted else None
            if self.remap is not None:
                src = np.searchsorted(self.remap, src)
                dst = np.searchsorted(self.remap, dst)
            yield EdgeChunk(src.astype(np.int64), dst.astype(np.int64), w)


def ingest(edge_path, out_dir, avg_tile_size=DEFAULT_TILE_SIZE,
           memory_edges=DEFAULT_MEMORY_EDGES, workers=None, overwrite=False):
    """Partition the text edge list at ``edge_path`` into a dataset directory."""
    chunks = read_edge_list(edge_path, block_bytes=max(1 << 16, memory_edges * 8))
    return ingest_chunks(chunks, out_dir, avg_tile_size, memory_edges, workers, overwrite)


def ingest_arrays(src, dst, out_dir, weight=None, avg_tile_size=DEFAULT_TILE_SIZE,
                  memory_edges=DEFAULT_MEMORY_EDGES, workers=None, overwrite=False):
    """Same as :func:`ingest` for raw-id edges already held in arrays."""
    src = np.asarray(src, dtype=np.uint64)
    dst = np.asarray(dst, dtype=np.uint64)
    step = max(1, memory_edges)
    chunks = (EdgeChunk(src[i:i + step], dst[i:i + step],
                        None if weight is None else np.asarray(weight[i:i + step], dtype=np.float64))
              for i in range(0, len(src), step))
    return ingest_chunks(chunks, out_dir, avg_tile_size, memory_edges, workers, overwrite)


def ingest_chunks(chunks, out_dir, avg_tile_size=DEFAULT_TILE_SIZE,
                  memory_edges=DEFAULT_MEMORY_EDGES, workers=None, overwrite=False):
    """Partition raw-id EdgeChunks into a dataset directory.

    Output is first written next to ``out_dir`` and renamed into place, so a
    failure leaves no partial dataset behind.
    """
    out_dir = os.path.abspath(os.fspath(out_dir))
    if os.path.exists(out_dir) and os.listdir(out_dir):
        if not overwrite:
            raise FileExistsError(f"{out_dir} exists and is not empty")
    parent = os.path.dirname(out_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=os.path.basename(out_dir) + ".partial-", dir=parent)
    spill_root = tempfile.mkdtemp(prefix="gab-spill-", dir=parent)
    try:
        spill = _Spill(spill_root)
        uniq = np.zeros(0, dtype=np.uint64)
        for chunk in chunks:
            spill.append(chunk)
            uniq = np.union1d(uniq, np.unique(np.concatenate([chunk.src, chunk.dst])))
        nv = int(uniq.size)
        if nv > ts.U32_MAX:
            raise CapacityError(f"{nv} distinct vertices exceed the 32-bit id space")
        identity = nv == 0 or (int(uniq[0]) == 0 and int(uniq[-1]) == nv - 1)
        if not identity:
            spill.remap = uniq
        degrees = compute_degrees(spill, num_vertices=nv)
        splitters = build_splitters(degrees.in_degree, avg_tile_size)
        log.info("ingest: |V|=%d |E|=%d tiles=%d", nv, degrees.num_edges, len(splitters) - 1)
        manifest = partition_into_tiles(
            spill, splitters, degrees, staging, weighted=bool(spill.weighted),
            memory_edges=memory_edges, workers=workers, avg_tile_size=avg_tile_size,
            raw_ids=None if identity else uniq, spill_dir=spill_root)
        if os.path.exists(out_dir):
            shutil.rmtree(out_dir)
        os.rename(staging, out_dir)
        return manifest
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    finally:
        shutil.rmtree(spill_root, ignore_errors=True)


def write_edge_list(path, src, dst, weight=None):
    """Write edges as text, one ``src dst [weight]`` line each."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    with open(path, "w") as f:
        step = 1 << 20
        for lo in range(0, len(src), step):
            s, d = src[lo:lo + step], dst[lo:lo + step]
            if weight is None:
                lines = [f"{a} {b}\n" for a, b in zip(s.tolist(), d.tolist())]
            else:
                w = np.asarray(weight[lo:lo + step], dtype=np.float64)
                lines = [f"{a} {b} {c!r}\n" for a, b, c in zip(s.tolist(), d.tolist(), w.tolist())]
            f.writelines(lines)
