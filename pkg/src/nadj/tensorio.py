"""Bit-exact binary tensor files (.nadj).

Layout, all integers little-endian:

    bytes 0..3    magic "NADJ"
    bytes 4..7    format version, u32 (currently 1)
    byte  8       dtype code, u8: 0=f32, 1=f64, 2=c64, 3=c128
    byte  9       rank, u8 (1..4)
    then          rank shape entries, u64 each
    then          raw element data, row-major

Round-trips are bit-exact for every supported dtype.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import StorageError, ValidationError

MAGIC = b"NADJ"
FORMAT_VERSION = 1
MAX_RANK = 4

_DTYPE_CODES = {
    np.dtype("float32"): 0,
    np.dtype("float64"): 1,
    np.dtype("complex64"): 2,
    np.dtype("complex128"): 3,
}
# on-disk element encoding is explicitly little-endian
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8"), 3: np.dtype("<c16")}


def write_tensor(path, data: np.ndarray) -> None:
    """Write ``data`` to ``path`` in the .nadj format."""
    data = np.asarray(data)
    if data.dtype not in _DTYPE_CODES:
        raise ValidationError(f"unsupported dtype {data.dtype}; expected f32/f64/c64/c128")
    if data.ndim < 1:
        raise ValidationError("rank must be >= 1")
    if data.ndim > MAX_RANK:
        raise ValidationError(f"rank must be <= {MAX_RANK}, got {data.ndim}")
    code = _DTYPE_CODES[data.dtype]
    header = MAGIC + struct.pack("<IBB", FORMAT_VERSION, code, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    payload = np.ascontiguousarray(data, dtype=_CODE_DTYPES[code]).tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise StorageError(f"cannot write tensor file {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    """Read a .nadj tensor; exact inverse of write_tensor."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read tensor file {path}: {exc}") from exc
    if len(raw) < 10 or raw[:4] != MAGIC:
        raise StorageError(f"bad magic in {path}")
    version, code, rank = struct.unpack_from("<IBB", raw, 4)
    if version != FORMAT_VERSION:
        raise StorageError(f"unsupported format version {version} in {path}")
    if code not in _CODE_DTYPES:
        raise StorageError(f"unknown dtype code {code} in {path}")
    if rank < 1 or rank > MAX_RANK:
        raise StorageError(f"invalid rank {rank} in {path}")
    offset = 10
    if len(raw) < offset + 8 * rank:
        raise StorageError(f"truncated payload in {path}")
    shape = struct.unpack_from(f"<{rank}Q", raw, offset)
    offset += 8 * rank
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) - offset != expected:
        raise StorageError(
            f"truncated payload in {path}: declared {expected} data bytes, found {len(raw) - offset}"
        )
    data = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset)
    return data.reshape(shape).copy()
