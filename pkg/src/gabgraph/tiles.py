"""On-disk tile format, in-memory CSR tiles, and the dataset manifest.

A dataset directory holds::

    manifest            binary DatasetManifest (see write_manifest)
    indeg.bin           |V| x u32 in-degrees
    outdeg.bin          |V| x u32 out-degrees
    idmap.bin           |V| x u64 raw ids (absent when raw ids were already dense)
    tiles/tile_<t>.bin  one encoded Tile per file

All integers are little-endian.
"""

import bisect
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .bloom import BloomFilter
from .errors import CapacityError, ConsistencyError, DomainError, FormatError, UnsupportedVersionError

TILE_MAGIC = b"GHT1"
TILE_HEADER = struct.Struct("<4sIIIIQ")
FLAG_WEIGHTED = 1

MANIFEST_MAGIC = b"GHDM"
MANIFEST_VERSION = 1
_MANIFEST_HEAD = struct.Struct("<4sIQQIQId")
_DESCRIPTOR_HEAD = struct.Struct("<IIIQQIB")
FLAG_IDENTITY_IDS = 2

U32_MAX = 0xFFFFFFFF

MANIFEST_FILE = "manifest"
INDEG_FILE = "indeg.bin"
OUTDEG_FILE = "outdeg.bin"
IDMAP_FILE = "idmap.bin"
TILES_DIR = "tiles"


def tile_filename(tile_id):
    return f"tile_{tile_id}.bin"


@dataclass(eq=False)
class Tile:
    """In-edges of the consecutive targets ``first_target .. first_target+num_targets-1``.

    ``row[i]:row[i+1]`` slices ``col`` (source ids) and ``val`` (weights) for
    local target ``i``. ``val`` is None for unweighted datasets.
    """

    tile_id: int
    first_target: int
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray | None = None

    @property
    def num_targets(self):
        return len(self.row) - 1

    @property
    def num_edges(self):
        return len(self.col)

    @property
    def weighted(self):
        return self.val is not None

    def in_edges(self, local):
        lo, hi = int(self.row[local]), int(self.row[local + 1])
        weights = None if self.val is None else self.val[lo:hi]
        return self.col[lo:hi], weights

    def targets(self):
        return np.arange(self.first_target, self.first_target + self.num_targets, dtype=np.int64)

    def edges(self):
        """Re-expand to (src, dst, weight-or-None) arrays in CSR order."""
        counts = np.diff(self.row.astype(np.int64))
        dst = np.repeat(self.targets(), counts)
        return self.col.astype(np.int64), dst, self.val

    def __eq__(self, other):
        if not isinstance(other, Tile):
            return NotImplemented
        if (self.tile_id, self.first_target) != (other.tile_id, other.first_target):
            return False
        if (self.val is None) != (other.val is None):
            return False
        return (np.array_equal(self.row, other.row)
                and np.array_equal(self.col, other.col)
                and (self.val is None or np.array_equal(self.val, other.val)))


def _check_u32(name, value):
    if not 0 <= value <= U32_MAX:
        raise CapacityError(f"{name}={value} does not fit in 32 bits")


def encode_tile(tile):
    _check_u32("tile_id", tile.tile_id)
    _check_u32("first_target", tile.first_target)
    _check_u32("num_targets", tile.num_targets)
    _check_u32("num_edges", tile.num_edges)
    if tile.num_targets < 0 or tile.row[0] != 0 or tile.row[-1] != tile.num_edges:
        raise ConsistencyError(f"tile {tile.tile_id}: row offsets do not span col")
    if tile.val is not None and len(tile.val) != tile.num_edges:
        raise ConsistencyError(f"tile {tile.tile_id}: val length differs from col")
    flags = FLAG_WEIGHTED if tile.weighted else 0
    parts = [
        TILE_HEADER.pack(TILE_MAGIC, tile.tile_id, tile.first_target, tile.num_targets,
                         flags, tile.num_edges),
        np.ascontiguousarray(tile.row, dtype="<u4").tobytes(),
        np.ascontiguousarray(tile.col, dtype="<u4").tobytes(),
    ]
    if tile.weighted:
        parts.append(np.ascontiguousarray(tile.val, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_tile(data):
    data = memoryview(data)
    if len(data) < TILE_HEADER.size + 4:
        raise FormatError("tile truncated: shorter than header")
    magic, tile_id, first_target, num_targets, flags, num_edges = TILE_HEADER.unpack_from(data)
    if magic[:3] != TILE_MAGIC[:3]:
        raise FormatError(f"bad tile magic {bytes(magic)!r}")
    if magic != TILE_MAGIC:
        raise UnsupportedVersionError(f"unsupported tile format version {magic[3:]!r}")
    weighted = bool(flags & FLAG_WEIGHTED)
    row_end = TILE_HEADER.size + 4 * (num_targets + 1)
    col_end = row_end + 4 * num_edges
    val_end = col_end + (8 * num_edges if weighted else 0)
    if len(data) != val_end + 4:
        raise FormatError(f"tile length {len(data)} != expected {val_end + 4} (truncated or padded)")
    (stored,) = struct.unpack_from("<I", data, val_end)
    if zlib.crc32(data[:val_end]) != stored:
        raise FormatError(f"tile {tile_id}: checksum mismatch")
    row = np.frombuffer(data, dtype="<u4", count=num_targets + 1, offset=TILE_HEADER.size)
    col = np.frombuffer(data, dtype="<u4", count=num_edges, offset=row_end)
    val = np.frombuffer(data, dtype="<f8", count=num_edges, offset=col_end) if weighted else None
    if row[0] != 0 or row[-1] != num_edges or (num_targets and np.any(row[1:] < row[:-1])):
        raise FormatError(f"tile {tile_id}: malformed row offsets")
    return Tile(tile_id, first_target, row, col, val)


def tile_of_vertex(v, boundaries):
    """Index t with ``boundaries[t] <= v < boundaries[t+1]``."""
    if not 0 <= v < boundaries[-1]:
        raise DomainError(f"vertex {v} outside [0, {boundaries[-1]})")
    return bisect.bisect_right(boundaries, v) - 1


@dataclass
class TileDescriptor:
    tile_id: int
    first_target: int
    num_targets: int
    num_edges: int
    byte_length: int
    bloom: BloomFilter


@dataclass
class DatasetManifest:
    vertex_count: int
    edge_count: int
    weighted: bool
    avg_tile_size: int
    splitters: list
    descriptors: list = field(default_factory=list)
    identity_ids: bool = True
    format_version: int = MANIFEST_VERSION

    @property
    def tile_count(self):
        return len(self.descriptors)

    @property
    def avg_degree(self):
        return self.edge_count / self.vertex_count if self.vertex_count else 0.0

    @property
    def total_tile_bytes(self):
        return sum(d.byte_length for d in self.descriptors)

    def validate(self):
        if sum(d.num_edges for d in self.descriptors) != self.edge_count:
            raise ConsistencyError("tile edge counts do not sum to |E|")
        if [d.tile_id for d in self.descriptors] != list(range(self.tile_count)):
            raise ConsistencyError("descriptors are not ordered by tile id")
        if len(self.splitters) != self.tile_count + 1:
            raise ConsistencyError("splitter table length is not P+1")
        if self.splitters[0] != 0 or self.splitters[-1] != self.vertex_count:
            raise ConsistencyError("splitter table does not span [0, |V|)")


def encode_manifest(m):
    flags = (FLAG_WEIGHTED if m.weighted else 0) | (FLAG_IDENTITY_IDS if m.identity_ids else 0)
    parts = [
        _MANIFEST_HEAD.pack(MANIFEST_MAGIC, m.format_version, m.vertex_count, m.edge_count,
                            flags, m.avg_tile_size, m.tile_count, m.avg_degree),
        np.asarray(m.splitters, dtype="<u4").tobytes(),
    ]
    for d in m.descriptors:
        parts.append(_DESCRIPTOR_HEAD.pack(d.tile_id, d.first_target, d.num_targets, d.num_edges,
                                           d.byte_length, d.bloom.num_bits, d.bloom.num_hashes))
        parts.append(d.bloom.to_bytes())
    idmap = b"" if m.identity_ids else IDMAP_FILE.encode()
    parts.append(struct.pack("<H", len(idmap)) + idmap)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_manifest(data):
    if len(data) < _MANIFEST_HEAD.size + 4:
        raise FormatError("manifest truncated")
    (stored,) = struct.unpack_from("<I", data, len(data) - 4)
    magic, version, nv, ne, flags, s, p, _avg = _MANIFEST_HEAD.unpack_from(data)
    if magic != MANIFEST_MAGIC:
        raise FormatError(f"bad manifest magic {magic!r}")
    if version != MANIFEST_VERSION:
        raise UnsupportedVersionError(f"unsupported manifest version {version}")
    if zlib.crc32(data[:-4]) != stored:
        raise FormatError("manifest checksum mismatch")
    try:
        off = _MANIFEST_HEAD.size
        splitters = np.frombuffer(data, dtype="<u4", count=p + 1, offset=off).astype(np.int64).tolist()
        off += 4 * (p + 1)
        descriptors = []
        for _ in range(p):
            tid, first, nt, nedges, blen, nbits, nh = _DESCRIPTOR_HEAD.unpack_from(data, off)
            off += _DESCRIPTOR_HEAD.size
            bloom = BloomFilter.from_bytes(nbits, nh, data[off:off + nbits // 8])
            off += nbits // 8
            descriptors.append(TileDescriptor(tid, first, nt, nedges, blen, bloom))
        (name_len,) = struct.unpack_from("<H", data, off)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"manifest truncated: {exc}") from exc
    m = DatasetManifest(nv, ne, bool(flags & FLAG_WEIGHTED), s, splitters, descriptors,
                        identity_ids=bool(flags & FLAG_IDENTITY_IDS), format_version=version)
    m.validate()
    return m


class Dataset:
    """Read-only view of a dataset directory. Safe for concurrent readers."""

    def __init__(self, path):
        self.path = os.fspath(path)
        with open(os.path.join(self.path, MANIFEST_FILE), "rb") as f:
            self.manifest = decode_manifest(f.read())
        self._raw_ids = None

    @property
    def vertex_count(self):
        return self.manifest.vertex_count

    @property
    def descriptors(self):
        return self.manifest.descriptors

    def tile_path(self, t):
        return os.path.join(self.path, TILES_DIR, tile_filename(t))

    def read_tile_bytes(self, t):
        with open(self.tile_path(t), "rb") as f:
            return f.read()

    def load_tile(self, t):
        return decode_tile(self.read_tile_bytes(t))

    def _u32_array(self, name):
        arr = np.fromfile(os.path.join(self.path, name), dtype="<u4")
        if arr.size != self.vertex_count:
            raise FormatError(f"{name}: expected {self.vertex_count} entries, found {arr.size}")
        return arr.astype(np.int64)

    def in_degree(self):
        return self._u32_array(INDEG_FILE)

    def out_degree(self):
        return self._u32_array(OUTDEG_FILE)

    def raw_ids(self):
        """Raw (pre-compaction) id of every dense vertex id."""
        if self._raw_ids is None:
            if self.manifest.identity_ids:
                self._raw_ids = np.arange(self.vertex_count, dtype=np.uint64)
            else:
                self._raw_ids = np.fromfile(os.path.join(self.path, IDMAP_FILE), dtype="<u8")
        return self._raw_ids

    def dense_id(self, raw):
        ids = self.raw_ids()
        i = int(np.searchsorted(ids, np.uint64(raw)))
        if raw < 0 or i >= ids.size or int(ids[i]) != raw:
            raise DomainError(f"vertex {raw} does not occur in the dataset")
        return i

    def edges(self):
        """All edges as dense-id arrays (src, dst, weight-or-None), tile by tile."""
        srcs, dsts, vals = [], [], []
        for t in range(self.manifest.tile_count):
            s, d, w = self.load_tile(t).edges()
            srcs.append(s)
            dsts.append(d)
            if w is not None:
                vals.append(w)
        if not srcs:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, (np.zeros(0) if self.manifest.weighted else None)
        weights = np.concatenate(vals) if self.manifest.weighted else None
        return np.concatenate(srcs), np.concatenate(dsts), weights

    def disk_bytes(self):
        total = 0
        for root, _dirs, files in os.walk(self.path):
            total += sum(os.path.getsize(os.path.join(root, f)) for f in files)
        return total
