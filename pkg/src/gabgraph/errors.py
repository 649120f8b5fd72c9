"""Exception hierarchy shared by all gabgraph modules."""


class GraphError(Exception):
    """Base class for every error raised by gabgraph."""


class ParseError(GraphError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapacityError(GraphError):
    """A count or id does not fit the fixed-width on-disk format."""


class ConsistencyError(GraphError):
    """Data violates a cross-structure invariant (ids, degrees, counts)."""


class FormatError(GraphError):
    """Bad magic, checksum, truncation, or layout in a binary file."""


class UnsupportedVersionError(FormatError):
    pass


class DomainError(GraphError, ValueError):
    """An argument lies outside its valid range."""


class ProtocolError(GraphError):
    """A wire frame arrived out of protocol (wrong superstep, unknown kind)."""


class TransportError(GraphError):
    """Peer disconnect, checksum failure on the wire, or barrier timeout."""


class ProgramError(GraphError):
    """A vertex program raised while processing a tile."""

    def __init__(self, tile_id, vertex, cause):
        self.tile_id = tile_id
        self.vertex = vertex
        super().__init__(f"vertex program failed on tile {tile_id}, vertex {vertex}: {cause!r}")
