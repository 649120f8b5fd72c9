"""Update broadcast: frame encoding, dense/sparse selection, transports, barrier.

Frame layout (little-endian)::

    "GHM1" | superstep u32 | origin u16 | kind u8 | codec u8 | tile_id u32
    | first_target u32 | num_targets u32 | uncompressed_len u32 | payload | crc32 u32

kind 0 (dense) payload:  bitvector, ceil(num_targets/8) bytes, LSB-first
                         + num_targets x f64 values over the tile's target range
kind 1 (sparse) payload: pair_count u32 + pair_count x (u32 vertex id, f64 value)
kind 2 (barrier) payload: updated count u64

The payload is compressed according to ``codec`` unless that would not make
it smaller, in which case codec 0 is recorded; the CRC covers the header
and the compressed payload. Over TCP each frame is prefixed by a u32 length.
"""

import logging
import queue
import socket
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from enum import IntEnum

import lz4.block
import numpy as np

from .errors import FormatError, ProtocolError, TransportError

log = logging.getLogger(__name__)

FRAME_MAGIC = b"GHM1"
FRAME_HEADER = struct.Struct("<4sIHBBIIII")
_CRC = struct.Struct("<I")
_PAIR = np.dtype([("id", "<u4"), ("val", "<f8")])
_LEN = struct.Struct("<I")
_HELLO = struct.Struct("<4sH")
DEFAULT_THRESHOLD = 0.8
DEFAULT_TIMEOUT = 60.0


class Kind(IntEnum):
    DENSE = 0
    SPARSE = 1
    BARRIER = 2


class Codec(IntEnum):
    NONE = 0
    FAST = 1
    HIGH = 2

    @classmethod
    def parse(cls, name):
        return {"none": cls.NONE, "fast": cls.FAST, "high": cls.HIGH}[name]

    def compress(self, data):
        if self is Codec.NONE:
            return data
        if self is Codec.FAST:
            return lz4.block.compress(data, store_size=False)
        return zlib.compress(data, 3)

    def decompress(self, data, size):
        if self is Codec.NONE:
            return data
        if self is Codec.FAST:
            return lz4.block.decompress(data, uncompressed_size=size)
        return zlib.decompress(data)


def sparsity_ratio(num_targets, num_updates):
    """Unchanged targets over all targets of a tile (1.0 for an empty tile)."""
    if num_targets == 0:
        return 1.0
    return (num_targets - num_updates) / num_targets


@dataclass(frozen=True)
class SparsityPolicy:
    mode: str = "hybrid"
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.mode not in ("dense", "sparse", "hybrid"):
            raise ValueError(f"unknown comm mode {self.mode!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def choose(self, num_targets, num_updates):
        if self.mode == "dense":
            return Kind.DENSE
        if self.mode == "sparse":
            return Kind.SPARSE
        if sparsity_ratio(num_targets, num_updates) > self.threshold:
            return Kind.SPARSE
        return Kind.DENSE


@dataclass
class UpdateMessage:
    """Decoded update set of one tile; ``ids`` are absolute and ascending."""

    superstep: int
    origin: int
    tile_id: int
    first_target: int
    num_targets: int
    kind: Kind
    codec: Codec
    ids: np.ndarray
    values: np.ndarray

    def payload(self):
        if self.kind is Kind.DENSE:
            local = self.ids - self.first_target
            bits = np.zeros(self.num_targets, dtype=bool)
            bits[local] = True
            dense = np.zeros(self.num_targets, dtype="<f8")
            dense[local] = self.values
            return np.packbits(bits, bitorder="little").tobytes() + dense.tobytes()
        pairs = np.empty(len(self.ids), dtype=_PAIR)
        pairs["id"] = self.ids
        pairs["val"] = self.values
        return _LEN.pack(len(pairs)) + pairs.tobytes()

    def to_frame(self):
        raw = self.payload()
        return _frame(self.superstep, self.origin, self.kind, self.codec, self.tile_id,
                      self.first_target, self.num_targets, raw)


@dataclass
class BarrierMessage:
    superstep: int
    origin: int
    count: int

    kind = Kind.BARRIER

    def to_frame(self):
        return _frame(self.superstep, self.origin, Kind.BARRIER, Codec.NONE, 0, 0, 0,
                      struct.pack("<Q", self.count))


def _frame(superstep, origin, kind, codec, tile_id, first_target, num_targets, raw):
    body = codec.compress(raw)
    if len(body) >= len(raw):
        # incompressible payloads (e.g. random-looking doubles) travel uncompressed
        body, codec = raw, Codec.NONE
    head = FRAME_HEADER.pack(FRAME_MAGIC, superstep, origin, kind, codec, tile_id,
                             first_target, num_targets, len(raw))
    crc = zlib.crc32(body, zlib.crc32(head))
    return b"".join((head, body, _CRC.pack(crc)))


def encode_updates(ids, values, descriptor, policy, superstep=0, origin=0, codec=Codec.NONE):
    """Build the message for one tile's update batch.

    ``descriptor`` needs ``tile_id``, ``first_target`` and ``num_targets``
    (a TileDescriptor or Tile both work).
    """
    ids = np.asarray(ids, dtype=np.int64)
    values = np.asarray(values, dtype=np.float64)
    if len(ids) > 1 and np.any(np.diff(ids) <= 0):
        order = np.argsort(ids, kind="stable")
        ids, values = ids[order], values[order]
    first, nt = descriptor.first_target, descriptor.num_targets
    if len(ids) and (ids[0] < first or ids[-1] >= first + nt):
        raise ValueError(f"update outside tile {descriptor.tile_id} target range")
    kind = policy.choose(nt, len(ids))
    return UpdateMessage(superstep, origin, descriptor.tile_id, first, nt, kind, Codec(codec),
                         ids, values)


def decode_frame(frame):
    """Parse and verify a wire frame into an UpdateMessage or BarrierMessage."""
    frame = memoryview(frame)
    if len(frame) < FRAME_HEADER.size + _CRC.size:
        raise FormatError("frame truncated")
    head = frame[:FRAME_HEADER.size]
    magic, superstep, origin, kind, codec, tile_id, first, nt, raw_len = FRAME_HEADER.unpack(head)
    if magic != FRAME_MAGIC:
        raise FormatError(f"bad frame magic {bytes(magic)!r}")
    body = frame[FRAME_HEADER.size:-_CRC.size]
    (crc,) = _CRC.unpack(frame[-_CRC.size:])
    if zlib.crc32(body, zlib.crc32(head)) != crc:
        raise TransportError("frame checksum mismatch")
    try:
        kind, codec = Kind(kind), Codec(codec)
    except ValueError as exc:
        raise ProtocolError(str(exc)) from None
    try:
        raw = codec.decompress(bytes(body), raw_len)
    except Exception as exc:
        raise TransportError(f"payload decompression failed: {exc}") from exc
    if len(raw) != raw_len:
        raise FormatError("payload length mismatch")
    if kind is Kind.BARRIER:
        (count,) = struct.unpack("<Q", raw)
        return BarrierMessage(superstep, origin, count)
    if kind is Kind.DENSE:
        nbytes = (nt + 7) // 8
        if raw_len != nbytes + 8 * nt:
            raise FormatError("dense payload size does not match num_targets")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8, count=nbytes),
                             count=nt, bitorder="little").astype(bool)
        dense = np.frombuffer(raw, dtype="<f8", count=nt, offset=nbytes)
        local = np.flatnonzero(bits)
        ids, values = local + first, dense[local]
    else:
        (n,) = _LEN.unpack_from(raw)
        if raw_len != _LEN.size + n * _PAIR.itemsize:
            raise FormatError("sparse payload size does not match pair count")
        pairs = np.frombuffer(raw, dtype=_PAIR, count=n, offset=_LEN.size)
        ids, values = pairs["id"].astype(np.int64), pairs["val"].copy()
    return UpdateMessage(superstep, origin, tile_id, first, nt, kind, codec, ids, values)


def decode_and_apply(msg, states, superstep=None):
    """Write a message's updates into the next-superstep slots; returns the count."""
    if not isinstance(msg, UpdateMessage):
        msg = decode_frame(msg)
        if not isinstance(msg, UpdateMessage):
            raise ProtocolError("expected an update frame")
    if superstep is not None and msg.superstep != superstep:
        raise ProtocolError(f"update for superstep {msg.superstep} during superstep {superstep}")
    states.updated_value[msg.ids] = msg.values
    states.updated_flags[msg.ids] = True
    return len(msg.ids)


# -- transports ------------------------------------------------------------

_ABORT = object()
_CLOSED = object()


class PeerClosed(TransportError):
    """A peer's connection ended; fatal only if that peer still owes frames."""

    def __init__(self, peer, reason):
        super().__init__(f"rank {peer} disconnected ({reason})")
        self.peer = peer


class LocalHub:
    """In-process full mesh: one inbox queue per rank."""

    def __init__(self, size):
        self.size = size
        self.inboxes = [queue.Queue() for _ in range(size)]
        self.endpoints = [LocalTransport(self, r) for r in range(size)]

    def abort(self, reason="peer aborted"):
        for q in self.inboxes:
            q.put((None, _ABORT, reason))


class LocalTransport:
    def __init__(self, hub, rank):
        self.hub = hub
        self.rank = rank
        self.size = hub.size

    def send(self, dest, frame):
        self.hub.inboxes[dest].put((self.rank, frame, None))

    def recv(self, timeout):
        try:
            origin, frame, reason = self.hub.inboxes[self.rank].get(timeout=timeout)
        except queue.Empty:
            return None
        if frame is _ABORT:
            raise TransportError(f"run aborted: {reason}")
        return origin, frame

    def abort(self, reason):
        self.hub.abort(reason)

    def close(self):
        pass


def parse_address(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {text!r}, expected host:port")
    return host, int(port)


class TcpTransport:
    """Full-mesh TCP transport with length-prefixed frames.

    Rank ``j`` listens on ``addresses[j]``, connects to every lower rank and
    accepts a connection from every higher rank. One reader thread per peer
    feeds a shared inbox, so per-origin FIFO order is preserved.
    """

    def __init__(self, rank, addresses, connect_timeout=DEFAULT_TIMEOUT):
        self.rank = rank
        self.size = len(addresses)
        self.addresses = [parse_address(a) if isinstance(a, str) else a for a in addresses]
        self.inbox = queue.Queue()
        self.socks = {}
        self.send_locks = {}
        self._closing = False
        deadline = time.monotonic() + connect_timeout

        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(self.addresses[rank])
        listener.listen(self.size)
        try:
            for peer in range(rank):
                self._register(peer, self._connect(peer, deadline))
            for _ in range(rank + 1, self.size):
                listener.settimeout(max(0.01, deadline - time.monotonic()))
                try:
                    sock, _addr = listener.accept()
                except socket.timeout:
                    raise TransportError(f"rank {rank}: timed out waiting for peers") from None
                sock.settimeout(max(0.01, deadline - time.monotonic()))
                magic, peer = _HELLO.unpack(_recv_exact(sock, _HELLO.size))
                if magic != FRAME_MAGIC or not rank < peer < self.size or peer in self.socks:
                    raise TransportError(f"rank {rank}: bad handshake from {_addr}")
                self._register(peer, sock)
        except BaseException:
            self.close()
            raise
        finally:
            listener.close()
        for peer, sock in self.socks.items():
            threading.Thread(target=self._reader, args=(peer, sock), daemon=True,
                             name=f"tcp-reader-{rank}<-{peer}").start()

    def _connect(self, peer, deadline):
        while True:
            try:
                sock = socket.create_connection(self.addresses[peer], timeout=1.0)
                sock.sendall(_HELLO.pack(FRAME_MAGIC, self.rank))
                return sock
            except OSError:
                if time.monotonic() > deadline:
                    raise TransportError(f"rank {self.rank}: cannot reach rank {peer}") from None
                time.sleep(0.05)

    def _register(self, peer, sock):
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.socks[peer] = sock
        self.send_locks[peer] = threading.Lock()

    def _reader(self, peer, sock):
        try:
            while True:
                (n,) = _LEN.unpack(_recv_exact(sock, _LEN.size))
                self.inbox.put((peer, _recv_exact(sock, n), None))
        except (OSError, EOFError) as exc:
            if not self._closing:
                self.inbox.put((peer, _CLOSED, str(exc) or type(exc).__name__))

    def send(self, dest, frame):
        try:
            with self.send_locks[dest]:
                self.socks[dest].sendall(_LEN.pack(len(frame)) + frame)
        except OSError as exc:
            raise TransportError(f"send to rank {dest} failed: {exc}") from exc

    def recv(self, timeout):
        try:
            origin, frame, reason = self.inbox.get(timeout=timeout)
        except queue.Empty:
            return None
        if frame is _CLOSED:
            raise PeerClosed(origin, reason)
        return origin, frame

    def abort(self, reason):
        self.close()

    def close(self):
        self._closing = True
        for sock in self.socks.values():
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            sock.close()


def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        part = sock.recv(n - len(buf))
        if not part:
            raise EOFError("connection closed")
        buf += part
    return bytes(buf)


class Communicator:
    """Per-server broadcast endpoint and BSP barrier over a transport.

    The barrier is the single consumer of incoming frames: it applies update
    frames of the current superstep, stashes frames of the next one (a faster
    peer may already be there), and counts barrier frames. Because every
    origin's frames arrive in order, holding all barrier frames means all
    update frames of the superstep have been applied.
    """

    def __init__(self, transport, policy=None, codec=Codec.FAST, timeout=DEFAULT_TIMEOUT):
        self.transport = transport
        self.rank = transport.rank
        self.size = transport.size
        self.policy = policy or SparsityPolicy()
        self.codec = Codec(codec)
        self.timeout = timeout
        self._stash = []
        self._closed = set()

    def broadcast(self, frame):
        """Send a frame to every other server; returns wire bytes sent."""
        for peer in range(self.size):
            if peer != self.rank:
                self.transport.send(peer, frame)
        return len(frame) * (self.size - 1)

    def broadcast_updates(self, superstep, descriptor, ids, values):
        if self.size == 1:
            return 0
        msg = encode_updates(ids, values, descriptor, self.policy, superstep, self.rank, self.codec)
        return self.broadcast(msg.to_frame())

    def barrier(self, superstep, local_count, states):
        """Block until every server reached ``superstep``'s barrier; returns the global count."""
        counts = {self.rank: local_count}
        if self.size == 1:
            return local_count
        if self._closed:
            raise TransportError(f"barrier {superstep}: ranks {sorted(self._closed)} disconnected")
        self.broadcast(BarrierMessage(superstep, self.rank, local_count).to_frame())
        pending, self._stash = self._stash, []
        for msg in pending:
            self._consume(msg, superstep, states, counts)
        deadline = time.monotonic() + self.timeout
        while len(counts) < self.size:
            remaining = deadline - time.monotonic()
            try:
                item = self.transport.recv(max(0.0, remaining)) if remaining > 0 else None
            except PeerClosed as exc:
                # a peer may close right after its final barrier; its frames precede the close
                if exc.peer not in counts:
                    raise
                self._closed.add(exc.peer)
                continue
            if item is None:
                status = {r: ("arrived" if r in counts else "missing") for r in range(self.size)}
                raise TransportError(f"barrier {superstep} timed out after {self.timeout}s: {status}")
            self._consume(decode_frame(item[1]), superstep, states, counts)
        return sum(counts.values())

    def _consume(self, msg, superstep, states, counts):
        if msg.superstep == superstep + 1:
            self._stash.append(msg)
        elif msg.superstep != superstep:
            raise ProtocolError(f"rank {self.rank}: frame for superstep {msg.superstep} "
                                f"from rank {msg.origin} during superstep {superstep}")
        elif isinstance(msg, BarrierMessage):
            if msg.origin in counts:
                raise ProtocolError(f"duplicate barrier from rank {msg.origin}")
            counts[msg.origin] = msg.count
        else:
            decode_and_apply(msg, states, superstep)
