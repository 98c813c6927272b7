"""DPRT flat binary tensor files.

Layout (little-endian): magic ``DPRT``, u8 version=1, u8 dtype
(0 = f32 real, 1 = f32 complex interleaved), u8 rank, rank x u32 dims,
then the payload. Used for all intermediate dumps: measurements, float
images, dense operators.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DPRT"
VERSION = 1
DTYPE_REAL_F32 = 0
DTYPE_COMPLEX_F32 = 1


class DprtError(ValueError):
    """Malformed or unsupported DPRT content."""


def dump_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        dtype_code = DTYPE_COMPLEX_F32
        payload = np.ascontiguousarray(arr, dtype=np.complex64)
        raw = payload.view(np.float32).tobytes()
    else:
        dtype_code = DTYPE_REAL_F32
        payload = np.ascontiguousarray(arr, dtype=np.float32)
        raw = payload.tobytes()
    if arr.ndim > 255:
        raise DprtError("rank exceeds u8")
    head = MAGIC + struct.pack("<BBB", VERSION, dtype_code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    return head + dims + raw


def load_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 7 or buf[:4] != MAGIC:
        raise DprtError("missing DPRT magic")
    version, dtype_code, rank = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise DprtError(f"unsupported DPRT version {version}")
    off = 7
    if len(buf) < off + 4 * rank:
        raise DprtError("truncated dimension list")
    dims = struct.unpack_from(f"<{rank}I", buf, off) if rank else ()
    off += 4 * rank
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if dtype_code == DTYPE_REAL_F32:
        expected = 4 * count
        if len(buf) - off != expected:
            raise DprtError(f"payload size {len(buf) - off}, expected {expected}")
        flat = np.frombuffer(buf, dtype="<f4", count=count, offset=off)
        return flat.reshape(dims).astype(np.float64)
    if dtype_code == DTYPE_COMPLEX_F32:
        expected = 8 * count
        if len(buf) - off != expected:
            raise DprtError(f"payload size {len(buf) - off}, expected {expected}")
        flat = np.frombuffer(buf, dtype="<f4", count=2 * count, offset=off)
        return (flat[0::2] + 1j * flat[1::2]).reshape(dims).astype(np.complex128)
    raise DprtError(f"unknown dtype code {dtype_code}")


def save(path: str | Path, arr: np.ndarray) -> None:
    Path(path).write_bytes(dump_bytes(arr))


def load(path: str | Path) -> np.ndarray:
    return load_bytes(Path(path).read_bytes())
