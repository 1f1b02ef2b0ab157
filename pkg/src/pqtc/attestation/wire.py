"""Length-prefixed JSON framing (protocol v1) and a pluggable channel.

Frame: 4-byte big-endian body length, then a UTF-8 JSON object carrying
``"v": 1``, a ``"type"`` tag and the message fields. Binary values are
unpadded base64url. Decoding is all-or-nothing.
"""

from __future__ import annotations

import json
import socket
import struct
from typing import Callable, Optional

from ..errors import DecodeError
from .messages import (
    Ack,
    AttestationResult,
    AttestRequest,
    Challenge,
    Enroll,
    ErrorMessage,
    Evidence,
    GetResult,
)

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 20
HEADER = struct.Struct(">I")

MESSAGE_TYPES = {
    "attest-request": AttestRequest,
    "challenge": Challenge,
    "evidence": Evidence,
    "result": AttestationResult,
    "enroll": Enroll,
    "get-result": GetResult,
    "ack": Ack,
    "error": ErrorMessage,
}
_TYPE_OF = {cls: name for name, cls in MESSAGE_TYPES.items()}


def encode_frame(message, max_size: int = MAX_FRAME) -> bytes:
    try:
        tag = _TYPE_OF[type(message)]
    except KeyError:
        raise TypeError(f"{type(message).__name__} is not a protocol message") from None
    body = {"v": PROTOCOL_VERSION, "type": tag, **message.to_wire()}
    raw = json.dumps(body, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(raw) > max_size:
        raise ValueError(f"frame of {len(raw)} bytes exceeds the {max_size}-byte limit")
    return HEADER.pack(len(raw)) + raw


def decode_body(raw: bytes):
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as exc:
        raise DecodeError(f"frame body is not JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("frame body must be a JSON object")
    if obj.pop("v", None) != PROTOCOL_VERSION:
        raise DecodeError("unsupported protocol version")
    cls = MESSAGE_TYPES.get(obj.pop("type", None))
    if cls is None:
        raise DecodeError("unknown message type")
    try:
        return cls.from_wire(obj)
    except Exception as exc:
        raise DecodeError(f"malformed {cls.__name__}: {exc}") from None


def decode_frame(data: bytes, max_size: int = MAX_FRAME):
    """Decode exactly one complete frame."""
    data = bytes(data)
    if len(data) < HEADER.size:
        raise DecodeError("truncated frame header")
    (n,) = HEADER.unpack_from(data)
    if n > max_size:
        raise DecodeError(f"declared length {n} exceeds the {max_size}-byte limit")
    if len(data) != HEADER.size + n:
        raise DecodeError(f"frame length mismatch: declared {n}, got {len(data) - HEADER.size}")
    return decode_body(data[HEADER.size :])


class Channel:
    """Bidirectional message channel over a connected stream socket.

    ``wrap`` lets a deployment install TLS (for example
    ``ssl.SSLContext.wrap_socket``); tests use plain sockets. Quote
    authenticity never depends on the channel.
    """

    def __init__(self, sock: socket.socket, max_size: int = MAX_FRAME,
                 wrap: Optional[Callable[[socket.socket], socket.socket]] = None):
        self.sock = wrap(sock) if wrap else sock
        self.max_size = max_size

    @classmethod
    def connect(cls, address: str, timeout: float = 30.0, **kwargs) -> "Channel":
        host, port = parse_address(address)
        return cls(socket.create_connection((host, port), timeout=timeout), **kwargs)

    def send(self, message) -> None:
        self.sock.sendall(encode_frame(message, self.max_size))

    def _read(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self.sock.recv(min(n - len(buf), 65536))
            if not chunk:
                raise DecodeError("connection closed mid-frame")
            buf += chunk
        return bytes(buf)

    def recv(self):
        (n,) = HEADER.unpack(self._read(HEADER.size))
        if n > self.max_size:
            raise DecodeError(f"declared length {n} exceeds the {self.max_size}-byte limit")
        return decode_body(self._read(n))

    def request(self, message):
        self.send(message)
        return self.recv()

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must be host:port, got {address!r}")
    return host or "127.0.0.1", int(port)
