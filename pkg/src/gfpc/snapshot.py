"""Binary field snapshots.

Layout (all little-endian)::

    b"GFPC"                      magic
    u32 version                  currently 1
    u32 dim
    u32 M[axis]                  dim entries
    f64 lo[axis], f64 hi[axis]   dim (lo, hi) pairs
    f64 values                   prod(M) entries, x index varying fastest
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .spectral import Field, Grid

MAGIC = b"GFPC"
VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def header_size(dim: int) -> int:
    return 4 + 4 + 4 + 4 * dim + 16 * dim


def encode_snapshot(field: Field) -> bytes:
    grid = field.grid
    head = [MAGIC, struct.pack("<II", VERSION, grid.dim),
            struct.pack(f"<{grid.dim}I", *grid.points)]
    for lo, hi in zip(grid.domain_min, grid.domain_max):
        head.append(struct.pack("<dd", lo, hi))
    body = np.asarray(field.values, dtype="<f8").tobytes(order="F")
    return b"".join(head) + body


def decode_snapshot(data: bytes) -> Field:
    if len(data) < 12 or data[:4] != MAGIC:
        raise SnapshotFormatError("not a GFPC snapshot (bad magic)")
    version, dim = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    if not 1 <= dim <= 3:
        raise SnapshotFormatError(f"invalid dimension {dim}")
    need = header_size(dim)
    if len(data) < need:
        raise SnapshotFormatError("truncated header")
    points = struct.unpack_from(f"<{dim}I", data, 12)
    bounds = struct.unpack_from(f"<{2 * dim}d", data, 12 + 4 * dim)
    grid = Grid(tuple(points), tuple(bounds[0::2]), tuple(bounds[1::2]))
    count = int(np.prod(points))
    if len(data) != need + 8 * count:
        raise SnapshotFormatError(
            f"expected {need + 8 * count} bytes, found {len(data)} (truncated or padded file)")
    values = np.frombuffer(data, dtype="<f8", count=count, offset=need)
    return Field(grid, values.reshape(points, order="F").astype(float))


def write_snapshot(field: Field, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(encode_snapshot(field))
    os.replace(tmp, path)


def read_snapshot(path) -> Field:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())


def snapshot_name(t: float) -> str:
    return f"phi_t{t:.10g}.gfpc"
