"""Binary frame dump format.

Layout: magic "MSF1", then width and height as 32-bit little-endian unsigned
integers, then row-major 32-bit float depth (width*height), 3x32-bit float
normals, and 32-bit unsigned segmentation ids. Background pixels carry depth
0 and id 0. The dump holds image planes only; pose and timestamp travel out
of band.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import MalformedFrame
from .camera import SensorFrame

MAGIC = b"MSF1"


def write_frame(frame: SensorFrame) -> bytes:
    h, w = frame.depth.shape
    parts = [MAGIC, struct.pack("<II", w, h),
             frame.depth.astype("<f4").tobytes(),
             frame.normal.astype("<f4").tobytes(),
             frame.segmentation.astype("<u4").tobytes()]
    return b"".join(parts)


def read_frame(data: bytes) -> SensorFrame:
    if len(data) < 12 or data[:4] != MAGIC:
        raise MalformedFrame("bad magic or truncated header")
    w, h = struct.unpack_from("<II", data, 4)
    n = w * h
    expected = 12 + 4 * n + 12 * n + 4 * n
    if len(data) != expected:
        raise MalformedFrame(f"expected {expected} bytes for {w}x{h}, got {len(data)}")
    off = 12
    depth = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(h, w).astype(float)
    off += 4 * n
    normal = np.frombuffer(data, dtype="<f4", count=3 * n, offset=off).reshape(h, w, 3).astype(float)
    off += 12 * n
    seg = np.frombuffer(data, dtype="<u4", count=n, offset=off).reshape(h, w).copy()
    return SensorFrame(depth=depth, normal=normal, segmentation=seg)
