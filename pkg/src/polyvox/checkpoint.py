"""Binary parameter checkpoints.

Layout (all integers little-endian, unsigned):

    8 bytes   magic ``b"PVOXCKP1"``
    u32       format version (currently 1)
    u32       parameter count
    per parameter:
        u16   name length, then UTF-8 name bytes
        u8    dtype code (0 = float32, 1 = float64)
        u8    rank
        u32*  dimensions
        raw   little-endian values, row-major

Round-trips are bit-exact: raw bytes are written and read without any
float formatting step.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"PVOXCKP1"
VERSION = 1

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, params: dict[str, Tensor]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, tensor in params.items():
            raw_name = name.encode("utf-8")
            data = tensor.data
            code = _DTYPE_CODES.get(data.dtype)
            if code is None:
                raise CheckpointError(f"unsupported dtype {data.dtype} for parameter {name!r}")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<BB", code, data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype=_CODE_DTYPES[code]).tobytes())


def load_checkpoint(path: str | Path) -> dict[str, Tensor]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    offset = 16
    params: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        code, rank = struct.unpack_from("<BB", blob, offset)
        offset += 2
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name!r}")
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        data = np.frombuffer(blob, dtype=dtype, count=nbytes // dtype.itemsize,
                             offset=offset).reshape(shape)
        offset += nbytes
        params[name] = Tensor(np.array(data, dtype=dtype.newbyteorder("=")),
                              requires_grad=True, name=name)
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    return params
