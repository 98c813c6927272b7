"""DNZ1 frame codec, server side.

Little-endian throughout. A request is a fixed header followed by an
optional f32 payload:

    DNZ1 | u32 seq | u8 op | u32 t_index | f64 sigma_t | f64 alpha_t
         | u32 H | u32 W | u32 C | H*W*C f32

ops: 1 denoise, 2 ping, 3 info. Responses echo the magic and sequence id,
then a u8 status. Status 0 bodies depend on the op (tensor payload for
denoise, nothing for ping, u32-length JSON for info); status 1 carries a
u32-length UTF-8 message.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"DNZ1"
OP_DENOISE, OP_PING, OP_INFO = 1, 2, 3
STATUS_OK, STATUS_ERROR = 0, 1

HEADER = struct.Struct("<4sIBIddIII")
RESP = struct.Struct("<4sIB")

# hard cap on a single tensor, to keep a hostile header from allocating wild
MAX_ELEMENTS = 1 << 26


class FrameError(ValueError):
    """Header that cannot belong to a well-formed request."""


@dataclass(frozen=True)
class Request:
    seq: int
    op: int
    t_index: int
    sigma_t: float
    alpha_t: float
    tensor: np.ndarray | None


def read_exact(read, n: int) -> bytes | None:
    """Read exactly n bytes via ``read(k)``; None on clean EOF at a boundary."""
    chunks = []
    got = 0
    while got < n:
        chunk = read(n - got)
        if not chunk:
            return None if got == 0 else b""
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_request(read) -> Request | None:
    """Parse one request from a byte stream; None on EOF before a frame."""
    head = read_exact(read, HEADER.size)
    if head is None:
        return None
    if head == b"":
        raise FrameError("stream ended inside a header")
    magic, seq, op, t_index, sigma_t, alpha_t, h, w, c = HEADER.unpack(head)
    if magic != MAGIC:
        raise FrameError("bad magic")
    count = h * w * c
    if count > MAX_ELEMENTS:
        raise FrameError(f"tensor of {count} elements exceeds the server limit")
    tensor = None
    if count:
        body = read_exact(read, 4 * count)
        if not body:
            raise FrameError("stream ended inside a payload")
        tensor = np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)
    return Request(seq=seq, op=op, t_index=t_index, sigma_t=sigma_t, alpha_t=alpha_t, tensor=tensor)


def ok_tensor(seq: int, tensor: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    return RESP.pack(MAGIC, seq, STATUS_OK) + payload


def ok_empty(seq: int) -> bytes:
    return RESP.pack(MAGIC, seq, STATUS_OK)


def ok_json(seq: int, body: bytes) -> bytes:
    return RESP.pack(MAGIC, seq, STATUS_OK) + struct.pack("<I", len(body)) + body


def error(seq: int, message: str) -> bytes:
    data = message.encode("utf-8")
    return RESP.pack(MAGIC, seq, STATUS_ERROR) + struct.pack("<I", len(data)) + data
