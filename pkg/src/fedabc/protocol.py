"""Wire messages, framing, and the two transports (in-process and socket).

Frame layout, identical on every transport::

    [4-byte big-endian length][1-byte tag][payload]

where length counts the tag byte plus the payload, and the payload is a
compact UTF-8 JSON document with keys in the fixed order declared per message.
Floats serialize as shortest round-trip decimals, so numbers survive the wire
bit for bit. Tags:

    0 Hello              {"site_id": int, "n_j": int, "dim": int}
    1 ProposalBatch      {"iteration": int, "rows": [[float, ...], ...]}
    2 DiscrepancyReport  {"iteration": int, "values": [float, ...]}
    3 Terminate          {}

Sites only ever emit Hello and DiscrepancyReport; the strict parser in
:func:`parse_site_frames` enforces that boundary on captured traffic.
"""
from __future__ import annotations

import json
import queue
import socket
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, TransportClosed

TAG_HELLO = 0
TAG_PROPOSAL_BATCH = 1
TAG_DISCREPANCY_REPORT = 2
TAG_TERMINATE = 3

_MAX_FRAME_BYTES = 64 * 1024 * 1024


@dataclass(frozen=True)
class Hello:
    site_id: int
    n_j: int
    dim: int


@dataclass(frozen=True, eq=False)
class ProposalBatch:
    iteration: int
    rows: np.ndarray  # (count, dim) or (0, 0) for an empty batch


@dataclass(frozen=True, eq=False)
class DiscrepancyReport:
    iteration: int
    values: np.ndarray  # (count,) scalars; the only numeric payload a site emits


@dataclass(frozen=True)
class Terminate:
    pass


WireMessage = Hello | ProposalBatch | DiscrepancyReport | Terminate


def _require_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"field {key!r} must be an integer")
    return value


def _require_real(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"field {key!r} must contain real numbers")
    return float(value)


def encode_frame(msg: WireMessage) -> bytes:
    """Serialize a message to its framed byte representation."""
    if isinstance(msg, Hello):
        tag, doc = TAG_HELLO, {"site_id": msg.site_id, "n_j": msg.n_j, "dim": msg.dim}
    elif isinstance(msg, ProposalBatch):
        tag, doc = TAG_PROPOSAL_BATCH, {
            "iteration": msg.iteration,
            "rows": [[float(v) for v in row] for row in msg.rows],
        }
    elif isinstance(msg, DiscrepancyReport):
        tag, doc = TAG_DISCREPANCY_REPORT, {
            "iteration": msg.iteration,
            "values": [float(v) for v in msg.values],
        }
    elif isinstance(msg, Terminate):
        tag, doc = TAG_TERMINATE, {}
    else:
        raise TypeError(f"not a wire message: {type(msg)!r}")
    payload = json.dumps(doc, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return struct.pack(">I", len(payload) + 1) + bytes([tag]) + payload


def _parse_pairs(payload: bytes) -> list[tuple[str, object]]:
    try:
        pairs: list[tuple[str, object]] = []
        decoded = json.loads(
            payload.decode("utf-8"),
            object_pairs_hook=lambda p: pairs.append(p) or dict(p),
        )
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"malformed payload: {exc}") from exc
    if not isinstance(decoded, dict):
        raise ParseError("payload must be a JSON object")
    return pairs[-1] if pairs else []


def decode_payload(tag: int, payload: bytes) -> WireMessage:
    """Parse one payload strictly: exact keys, exact order, exact types."""
    pairs = _parse_pairs(payload)
    keys = [k for k, _ in pairs]
    fields = dict(pairs)
    if tag == TAG_HELLO:
        if keys != ["site_id", "n_j", "dim"]:
            raise ParseError(f"Hello keys must be ['site_id', 'n_j', 'dim'], got {keys}")
        return Hello(
            site_id=_require_int(fields["site_id"], "site_id"),
            n_j=_require_int(fields["n_j"], "n_j"),
            dim=_require_int(fields["dim"], "dim"),
        )
    if tag == TAG_PROPOSAL_BATCH:
        if keys != ["iteration", "rows"]:
            raise ParseError(f"ProposalBatch keys must be ['iteration', 'rows'], got {keys}")
        rows = fields["rows"]
        if not isinstance(rows, list) or any(not isinstance(r, list) for r in rows):
            raise ParseError("rows must be a list of lists")
        widths = {len(r) for r in rows}
        if len(widths) > 1:
            raise ParseError("rows must be rectangular")
        parsed = [[_require_real(v, "rows") for v in r] for r in rows]
        arr = np.array(parsed, dtype=np.float64) if rows else np.zeros((0, 0))
        return ProposalBatch(iteration=_require_int(fields["iteration"], "iteration"), rows=arr)
    if tag == TAG_DISCREPANCY_REPORT:
        if keys != ["iteration", "values"]:
            raise ParseError(f"DiscrepancyReport keys must be ['iteration', 'values'], got {keys}")
        values = fields["values"]
        if not isinstance(values, list):
            raise ParseError("values must be a list")
        arr = np.array([_require_real(v, "values") for v in values], dtype=np.float64)
        return DiscrepancyReport(iteration=_require_int(fields["iteration"], "iteration"), values=arr)
    if tag == TAG_TERMINATE:
        if keys:
            raise ParseError(f"Terminate payload must be empty, got keys {keys}")
        return Terminate()
    raise ParseError(f"unknown tag {tag}")


def decode_frame(frame: bytes) -> WireMessage:
    """Parse one complete frame (length prefix included)."""
    if len(frame) < 5:
        raise ParseError("frame shorter than header")
    (length,) = struct.unpack(">I", frame[:4])
    if length != len(frame) - 4:
        raise ParseError(f"length field {length} does not match frame size {len(frame) - 4}")
    return decode_payload(frame[4], frame[5:])


def iter_frames(data: bytes):
    """Yield (tag, payload) pairs from a captured byte stream."""
    offset = 0
    while offset < len(data):
        if len(data) - offset < 5:
            raise ParseError("truncated frame header")
        (length,) = struct.unpack(">I", data[offset : offset + 4])
        if length < 1 or length > _MAX_FRAME_BYTES:
            raise ParseError(f"implausible frame length {length}")
        end = offset + 4 + length
        if end > len(data):
            raise ParseError("truncated frame body")
        yield data[offset + 4], data[offset + 5 : end]
        offset = end


def parse_site_frames(data: bytes) -> list[WireMessage]:
    """Parse a captured site-to-coordinator stream against the site grammar.

    Sites may emit exactly one Hello followed by DiscrepancyReport frames.
    Anything else (including coordinator-side tags) raises ParseError.
    """
    messages: list[WireMessage] = []
    for position, (tag, payload) in enumerate(iter_frames(data)):
        if position == 0:
            if tag != TAG_HELLO:
                raise ParseError(f"site stream must open with Hello, got tag {tag}")
        elif tag != TAG_DISCREPANCY_REPORT:
            raise ParseError(f"site frame {position} has non-report tag {tag}")
        messages.append(decode_payload(tag, payload))
    return messages


class InProcessTransport:
    """Queue-backed duplex channel; frames are encoded bytes even in-process,
    so numeric behavior cannot depend on the transport choice."""

    _CLOSE = object()

    def __init__(self, outgoing: queue.Queue, incoming: queue.Queue):
        self._out = outgoing
        self._in = incoming
        self._closed = False

    @classmethod
    def pair(cls) -> tuple["InProcessTransport", "InProcessTransport"]:
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        return cls(a_to_b, b_to_a), cls(b_to_a, a_to_b)

    def send(self, msg: WireMessage) -> None:
        if self._closed:
            raise TransportClosed("send on closed transport")
        self._out.put(encode_frame(msg))

    def recv(self, timeout: float | None = None) -> WireMessage:
        if self._closed:
            raise TransportClosed("recv on closed transport")
        try:
            item = self._in.get(timeout=timeout)
        except queue.Empty as exc:
            raise TransportClosed("recv timed out") from exc
        if item is self._CLOSE:
            self._closed = True
            raise TransportClosed("peer closed the channel")
        return decode_frame(item)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._out.put(self._CLOSE)


class SocketTransport:
    """Length-prefixed frames over a stream socket."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, msg: WireMessage) -> None:
        try:
            self._sock.sendall(encode_frame(msg))
        except OSError as exc:
            raise TransportClosed(f"send failed: {exc}") from exc

    def _read_exact(self, count: int) -> bytes:
        chunks = []
        remaining = count
        while remaining:
            try:
                chunk = self._sock.recv(remaining)
            except OSError as exc:
                raise TransportClosed(f"recv failed: {exc}") from exc
            if not chunk:
                raise TransportClosed("peer closed the connection")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def recv(self, timeout: float | None = None) -> WireMessage:
        self._sock.settimeout(timeout)
        header = self._read_exact(4)
        (length,) = struct.unpack(">I", header)
        if length < 1 or length > _MAX_FRAME_BYTES:
            raise ParseError(f"implausible frame length {length}")
        body = self._read_exact(length)
        return decode_payload(body[0], body[1:])

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


def connect_socket(host: str, port: int, timeout: float = 30.0) -> SocketTransport:
    """Dial the coordinator's listener."""
    sock = socket.create_connection((host, port), timeout=timeout)
    sock.settimeout(None)
    return SocketTransport(sock)


class SiteListener:
    """Bound listening socket; binding and accepting are split so callers can
    bind port 0 and publish the realized port before sites dial in."""

    def __init__(self, host: str, port: int):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen()

    @property
    def port(self) -> int:
        return self._sock.getsockname()[1]

    def accept_sites(self, n_sites: int, timeout: float = 120.0) -> list[SocketTransport]:
        self._sock.settimeout(timeout)
        transports = []
        try:
            for _ in range(n_sites):
                conn, _addr = self._sock.accept()
                conn.settimeout(None)
                transports.append(SocketTransport(conn))
        except OSError as exc:
            for t in transports:
                t.close()
            raise TransportClosed(f"accept failed: {exc}") from exc
        finally:
            self._sock.close()
        return transports
