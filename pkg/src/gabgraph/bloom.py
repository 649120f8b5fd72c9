"""Bloom filter over vertex ids, used to skip tiles whose sources did not change.

Hashing is double hashing over two splitmix64 streams with fixed seeds, so a
filter serialized into a manifest is queryable by any reader of the format.
"""

import numpy as np

BITS_PER_ITEM = 10
NUM_HASHES = 7
SEED_A = 0x9E3779B97F4A7C15
SEED_B = 0xC2B2AE3D27D4EB4F

_QUERY_CHUNK = 1 << 16


def _splitmix64(x):
    x = x.copy()
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def _positions(ids, num_bits, num_hashes):
    keys = np.asarray(ids, dtype=np.uint64)
    h1 = _splitmix64(keys ^ np.uint64(SEED_A))
    h2 = _splitmix64(keys ^ np.uint64(SEED_B)) | np.uint64(1)
    i = np.arange(num_hashes, dtype=np.uint64)
    with np.errstate(over="ignore"):
        combined = h1[:, None] + i[None, :] * h2[:, None]
    return combined % np.uint64(num_bits)


class BloomFilter:
    """Fixed-size bit array with ``num_hashes`` probes per key.

    False positives are possible; false negatives are not.
    """

    def __init__(self, num_bits, num_hashes=NUM_HASHES, bits=None):
        if num_bits <= 0 or num_bits % 8:
            raise ValueError("num_bits must be a positive multiple of 8")
        self.num_bits = int(num_bits)
        self.num_hashes = int(num_hashes)
        if bits is None:
            bits = np.zeros(num_bits // 8, dtype=np.uint8)
        self.bits = np.asarray(bits, dtype=np.uint8)
        if self.bits.size != num_bits // 8:
            raise ValueError("bit array length does not match num_bits")

    @classmethod
    def for_items(cls, ids):
        ids = np.unique(np.asarray(ids, dtype=np.uint64))
        num_bits = max(8, -(-BITS_PER_ITEM * ids.size // 8) * 8)
        bf = cls(num_bits)
        bf.add(ids)
        return bf

    def add(self, ids):
        ids = np.atleast_1d(np.asarray(ids, dtype=np.uint64))
        if ids.size == 0:
            return
        pos = _positions(ids, self.num_bits, self.num_hashes).ravel()
        flat = np.unpackbits(self.bits, bitorder="little")
        flat[pos.astype(np.int64)] = 1
        self.bits = np.packbits(flat, bitorder="little")

    def _hits(self, ids):
        pos = _positions(ids, self.num_bits, self.num_hashes).astype(np.int64)
        byte = self.bits[pos >> 3]
        set_ = (byte >> (pos & 7).astype(np.uint8)) & 1
        return set_.all(axis=1)

    def __contains__(self, vertex):
        return bool(self._hits(np.array([vertex], dtype=np.uint64))[0])

    def contains_any(self, ids):
        """True if at least one id in ``ids`` may be in the set."""
        ids = np.asarray(ids, dtype=np.uint64)
        for lo in range(0, ids.size, _QUERY_CHUNK):
            if self._hits(ids[lo:lo + _QUERY_CHUNK]).any():
                return True
        return False

    def to_bytes(self):
        return self.bits.tobytes()

    @classmethod
    def from_bytes(cls, num_bits, num_hashes, data):
        return cls(num_bits, num_hashes, np.frombuffer(data, dtype=np.uint8).copy())

    def __eq__(self, other):
        return (isinstance(other, BloomFilter)
                and self.num_bits == other.num_bits
                and self.num_hashes == other.num_hashes
                and np.array_equal(self.bits, other.bits))

    def __repr__(self):
        return f"BloomFilter(num_bits={self.num_bits}, num_hashes={self.num_hashes})"
