"""Binary tensor container for model checkpoints.

Layout, all little-endian:
  magic "MLDM", u16 version, u32 tensor_count, then per tensor:
  u16 name length, UTF-8 name, u8 rank, u64 per-axis dims,
  float64 row-major payload.

Insertion order of the dict is preserved on disk and on read, so a
rewrite of a just-read file is byte-identical.
"""

import struct

import numpy as np

from ..errors import ParseError, ValidationError

MAGIC = b"MLDM"
VERSION = 1


def write_tensors(path, tensors):
    path = str(path)
    for name, arr in tensors.items():
        if not name or len(name.encode("utf-8")) > 0xFFFF:
            raise ValidationError(f"bad tensor name {name!r}")
        if np.asarray(arr).ndim > 0xFF:
            raise ValidationError(f"tensor rank too large for {name!r}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            shape = arr.shape          # before ascontiguousarray promotes 0-d
            arr = np.ascontiguousarray(arr)
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", len(shape)))
            fh.write(struct.pack(f"<{len(shape)}Q", *shape))
            fh.write(arr.tobytes())


def _read_exact(fh, n, path, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise ParseError(f"truncated checkpoint while reading {what}",
                         path=path)
    return buf


def read_tensors(path):
    path = str(path)
    tensors = {}
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path, "magic") != MAGIC:
            raise ParseError("not a checkpoint file (bad magic)", path=path)
        version, count = struct.unpack(
            "<HI", _read_exact(fh, 6, path, "header"))
        if version != VERSION:
            raise ParseError(f"unsupported checkpoint version {version}",
                             path=path)
        for _ in range(count):
            (name_len,) = struct.unpack(
                "<H", _read_exact(fh, 2, path, "name length"))
            name = _read_exact(fh, name_len, path, "name").decode("utf-8")
            (rank,) = struct.unpack(
                "<B", _read_exact(fh, 1, path, "rank"))
            dims = struct.unpack(
                f"<{rank}Q", _read_exact(fh, 8 * rank, path, "dims"))
            n_items = 1
            for d in dims:
                n_items *= d
            payload = _read_exact(fh, 8 * n_items, path, f"tensor {name!r}")
            arr = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
            if name in tensors:
                raise ParseError(f"duplicate tensor name {name!r}", path=path)
            tensors[name] = arr
        if fh.read(1):
            raise ParseError("trailing bytes after last tensor", path=path)
    return tensors
