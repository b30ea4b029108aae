"""Binary field dumps.

Layout (all integers unsigned, all multi-byte values little-endian):

    offset  size  content
    0       8     magic b"DIRACFLD"
    8       4     endianness tag 0x01020304 (reads as 0x04030201 if byte-swapped)
    12      4     n, points per axis
    16      8     L, float64 period length
    24      4     component count c
    28      4     reserved, zero
    32      ...   c * n^3 float64 values, C order over (component, x1, x2, x3)

Nodes are in FFT order (index 0 is the origin).  Spinor fields are written as
their 8 real components (Re psi_1..4, Im psi_1..4).
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .grid import GridSpec, RealField8, SpinorField, realify

__all__ = ["MAGIC", "ENDIAN_TAG", "HEADER", "FieldFormatError", "write_field", "write_raw", "read_field", "read_raw"]

MAGIC = b"DIRACFLD"
ENDIAN_TAG = 0x01020304
HEADER = struct.Struct("<8sIIdII")


class FieldFormatError(ValueError):
    pass


def write_field(path: str | os.PathLike, field) -> int:
    """Write a RealField8, SpinorField or (c, n, n, n) array with a GridSpec.

    Returns the number of bytes written.
    """
    if isinstance(field, SpinorField):
        field = realify(field)
    if not isinstance(field, RealField8):
        raise TypeError(f"cannot dump {type(field).__name__}")
    return write_raw(path, field.grid, field.data)


def write_raw(path, grid: GridSpec, data: np.ndarray) -> int:
    data = np.asarray(data, dtype="<f8")
    if data.ndim != 4 or data.shape[1:] != grid.shape:
        raise ValueError(f"data shape {data.shape} does not match grid {grid.shape}")
    head = HEADER.pack(MAGIC, ENDIAN_TAG, grid.n, grid.L, data.shape[0], 0)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(data).tobytes())
    return HEADER.size + data.nbytes


def read_raw(path) -> tuple[GridSpec, np.ndarray]:
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < HEADER.size:
            raise FieldFormatError("file shorter than the header")
        magic, tag, n, L, c, _ = HEADER.unpack(head)
        if magic != MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}")
        if tag != ENDIAN_TAG:
            raise FieldFormatError(f"unexpected endianness tag {tag:#010x}")
        count = c * n**3
        body = fh.read()
    if len(body) != 8 * count:
        raise FieldFormatError(f"expected {8 * count} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(c, n, n, n).astype(float)
    return GridSpec(n, L), data


def read_field(path) -> RealField8:
    grid, data = read_raw(path)
    if data.shape[0] != 8:
        raise FieldFormatError(f"expected 8 components, found {data.shape[0]}")
    return RealField8(grid, data)
