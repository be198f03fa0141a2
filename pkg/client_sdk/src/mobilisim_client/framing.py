"""Wire frame codec, written against the documented protocol only.

A frame is a 4-byte big-endian unsigned payload length followed by that many
bytes of UTF-8 JSON with the keys "type", "timestamp", "payload" in that
order and no whitespace. Frames larger than 64 MiB are invalid.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

from .errors import ProtocolError

MAX_FRAME_BYTES = 64 * 1024 * 1024

KNOWN_TYPES = frozenset({
    "HELLO", "WELCOME", "STATE", "SET_CONTROLLER", "SET_TARGET", "ATTACH",
    "RENDER_REQUEST", "RENDER_RESPONSE", "IMU", "PING", "PONG", "ERROR",
})


@dataclass(frozen=True)
class Message:
    type: str
    timestamp: float
    payload: dict = field(default_factory=dict)


def encode(msg: Message) -> bytes:
    body = json.dumps({"type": msg.type, "timestamp": float(msg.timestamp),
                       "payload": msg.payload}, separators=(",", ":")).encode("utf-8")
    if len(body) > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame of {len(body)} bytes exceeds the 64 MiB limit")
    return struct.pack(">I", len(body)) + body


def decode(data: bytes) -> Message:
    """Decode exactly one frame."""
    if len(data) < 4:
        raise ProtocolError("frame shorter than its length prefix")
    (n,) = struct.unpack_from(">I", data)
    if n > MAX_FRAME_BYTES:
        raise ProtocolError(f"declared payload of {n} bytes exceeds the limit")
    if len(data) != 4 + n:
        raise ProtocolError(f"expected {4 + n} bytes, got {len(data)}")
    return _parse(data[4:])


def _parse(body: bytes) -> Message:
    try:
        doc = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not {"type", "timestamp", "payload"} <= set(doc):
        raise ProtocolError("payload missing type/timestamp/payload")
    if doc["type"] not in KNOWN_TYPES:
        raise ProtocolError(f"unknown message type {doc['type']!r}")
    return Message(doc["type"], float(doc["timestamp"]), doc["payload"])


class Parser:
    """Incremental decoder over a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out: list[Message] = []
        while len(self._buf) >= 4:
            (n,) = struct.unpack_from(">I", self._buf)
            if n > MAX_FRAME_BYTES:
                raise ProtocolError(f"declared payload of {n} bytes exceeds the limit")
            if len(self._buf) < 4 + n:
                break
            body = bytes(self._buf[4:4 + n])
            del self._buf[:4 + n]
            out.append(_parse(body))
        return out
