"""Reader and writer for CGWT tensor files.

Layout (little-endian)::

    b"CGWT"  u16 version (=1)  u32 tensor count
    per tensor:
        u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
        float32 data in row-major order
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

MAGIC = b"CGWT"
VERSION = 1


class CGWTError(ValueError):
    pass


class BadMagicError(CGWTError):
    pass


class TruncatedFileError(CGWTError):
    pass


def dumps(tensors):
    """Serialize an ordered mapping name -> array to bytes."""
    parts = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CGWTError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save(path, tensors):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


class _Cursor:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file truncated while reading {what}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf):
    cur = _Cursor(memoryview(buf))
    magic = bytes(cur.take(4, "magic"))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = cur.unpack("<HI", "header")
    if version != VERSION:
        raise CGWTError(f"unsupported CGWT version {version}")
    tensors = OrderedDict()
    for i in range(count):
        (nlen,) = cur.unpack("<H", f"name length of tensor #{i}")
        name = bytes(cur.take(nlen, f"name of tensor #{i}")).decode("utf-8")
        (ndim,) = cur.unpack("<B", f"rank of tensor {name!r}")
        dims = cur.unpack(f"<{ndim}I", f"dims of tensor {name!r}")
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        data = cur.take(4 * n, f"data of tensor {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(dims)
    if cur.pos != len(cur.buf):
        raise CGWTError(f"{len(cur.buf) - cur.pos} trailing bytes after {count} tensors")
    return tensors


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
