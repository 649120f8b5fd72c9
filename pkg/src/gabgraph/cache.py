"""Read-through tile cache with four compression modes.

The cache stores compressed bytes only; decompression and decoding happen
outside the lock on every hit. Admission is "until full": missed tiles are
admitted while they fit, the first one that does not fit marks the cache full,
and nothing is ever evicted during a run. The resident set is therefore a
prefix of the first-touch order, which makes misses monotone in capacity.
Under the cyclic scan a superstep performs, LRU would evict exactly the tile
needed next, whereas a pinned prefix gives a hit ratio of resident/total.
"""

import threading
import zlib
from dataclasses import dataclass
from enum import IntEnum

import lz4.block

from .tiles import decode_tile


class CacheMode(IntEnum):
    RAW = 1
    FAST = 2
    BALANCED = 3
    HIGH = 4

    @property
    def gamma(self):
        """Planning estimate of the compression ratio."""
        return GAMMA[self]

    def compress(self, data):
        if self is CacheMode.RAW:
            return bytes(data)
        if self is CacheMode.FAST:
            return lz4.block.compress(data, store_size=True)
        return zlib.compress(data, 1 if self is CacheMode.BALANCED else 3)

    def decompress(self, data):
        if self is CacheMode.RAW:
            return data
        if self is CacheMode.FAST:
            return lz4.block.decompress(data)
        return zlib.decompress(data)


GAMMA = {CacheMode.RAW: 1, CacheMode.FAST: 2, CacheMode.BALANCED: 4, CacheMode.HIGH: 5}
FALLBACK_MODE = CacheMode.BALANCED


def select_mode(total_bytes, capacity):
    """Smallest mode whose estimated footprint fits; BALANCED if none does."""
    for mode in CacheMode:
        if total_bytes / mode.gamma <= capacity:
            return mode
    return FALLBACK_MODE


@dataclass
class CacheConfig:
    capacity: int = 0
    mode: CacheMode | str = "auto"

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("cache capacity must be >= 0")

    def resolve(self, total_bytes):
        if self.mode == "auto":
            return select_mode(total_bytes, self.capacity)
        return CacheMode(int(self.mode))


@dataclass(frozen=True)
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    bytes_resident: int = 0
    raw_bytes_resident: int = 0
    disk_reads: int = 0
    disk_bytes_read: int = 0

    @property
    def miss_ratio(self):
        total = self.hits + self.misses
        return self.misses / total if total else 0.0

    @property
    def hit_ratio(self):
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    @property
    def measured_ratio(self):
        if not self.bytes_resident:
            return None
        return self.raw_bytes_resident / self.bytes_resident

    def __sub__(self, other):
        return CacheStats(
            hits=self.hits - other.hits,
            misses=self.misses - other.misses,
            evictions=self.evictions - other.evictions,
            bytes_resident=self.bytes_resident,
            raw_bytes_resident=self.raw_bytes_resident,
            disk_reads=self.disk_reads - other.disk_reads,
            disk_bytes_read=self.disk_bytes_read - other.disk_bytes_read,
        )


class EdgeCache:
    """Per-server tile cache in front of a Dataset. Safe for concurrent get_tile."""

    def __init__(self, dataset, config=None):
        self.dataset = dataset
        self.config = config or CacheConfig()
        self.capacity = self.config.capacity
        self.mode = self.config.resolve(dataset.manifest.total_tile_bytes)
        self._entries = {}
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0
        self._resident = 0
        self._raw_resident = 0
        self._disk_reads = 0
        self._disk_bytes = 0
        self._full = self.capacity == 0

    def get_tile(self, t):
        with self._lock:
            blob = self._entries.get(t)
            if blob is not None:
                self._hits += 1
        if blob is not None:
            return decode_tile(self.mode.decompress(blob))

        data = self.dataset.read_tile_bytes(t)
        tile = decode_tile(data)
        with self._lock:
            self._misses += 1
            self._disk_reads += 1
            self._disk_bytes += len(data)
            admit = not self._full and t not in self._entries
        if admit:
            blob = self.mode.compress(data)
            with self._lock:
                if not self._full and t not in self._entries:
                    if self._resident + len(blob) <= self.capacity:
                        self._entries[t] = blob
                        self._resident += len(blob)
                        self._raw_resident += len(data)
                    else:
                        self._full = True
        return tile

    def __contains__(self, t):
        return t in self._entries

    def stats(self):
        with self._lock:
            return CacheStats(self._hits, self._misses, 0, self._resident, self._raw_resident,
                              self._disk_reads, self._disk_bytes)
