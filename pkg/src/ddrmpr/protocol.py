"""DNZ1 wire protocol: framed tensor denoising over TCP or a stdio pipe.

All integers and floats are little-endian.

Request frame:
    magic ``DNZ1`` (4 bytes), u32 sequence_id, u8 op (1=denoise, 2=ping,
    3=info), u32 t_index, f64 sigma_t, f64 alpha_t, u32 H, u32 W, u32 C,
    then H*W*C f32 payload (VP-range values). Ping/info use H = W = C = 0.

Response frame:
    magic ``DNZ1``, u32 sequence_id, u8 status (0=ok, 1=error). On ok the
    body depends on the request op: denoise carries the H*W*C f32 payload,
    ping carries nothing, info carries u32 length + UTF-8 JSON
    ``{model_id, geometry, schedule_T}``. On error: u32 length + UTF-8
    message. The sequence id is authoritative for matching.
"""

from __future__ import annotations

import json
import shlex
import socket
import struct
import subprocess

import numpy as np

MAGIC = b"DNZ1"
OP_DENOISE = 1
OP_PING = 2
OP_INFO = 3
STATUS_OK = 0
STATUS_ERROR = 1

_REQ_HEAD = struct.Struct("<4sIBIddIII")
_RESP_HEAD = struct.Struct("<4sIB")


class ProtocolError(RuntimeError):
    """Malformed frame or a response that violates the protocol."""


class TransportError(OSError):
    """Connection or pipe failure; carries the retry count attempted."""

    def __init__(self, message: str, retries: int):
        super().__init__(message)
        self.retries = retries


class RemoteDenoiseError(RuntimeError):
    """The server answered with an error status."""


def pack_request(
    seq: int, op: int, t_index: int = 0, sigma_t: float = 0.0, alpha_t: float = 1.0,
    payload: np.ndarray | None = None,
) -> bytes:
    if payload is None:
        h = w = c = 0
        body = b""
    else:
        arr = np.asarray(payload)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ProtocolError(f"payload must be (H, W, C), got shape {arr.shape}")
        h, w, c = arr.shape
        body = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    head = _REQ_HEAD.pack(MAGIC, seq, op, t_index, sigma_t, alpha_t, h, w, c)
    return head + body


def unpack_request_head(buf: bytes) -> dict:
    if len(buf) != _REQ_HEAD.size:
        raise ProtocolError("short request header")
    magic, seq, op, t_index, sigma_t, alpha_t, h, w, c = _REQ_HEAD.unpack(buf)
    if magic != MAGIC:
        raise ProtocolError("bad magic")
    return {
        "seq": seq, "op": op, "t_index": t_index, "sigma_t": sigma_t,
        "alpha_t": alpha_t, "shape": (h, w, c),
    }


def request_head_size() -> int:
    return _REQ_HEAD.size


def pack_response_ok(seq: int, body: bytes = b"") -> bytes:
    return _RESP_HEAD.pack(MAGIC, seq, STATUS_OK) + body


def pack_response_error(seq: int, message: str) -> bytes:
    data = message.encode("utf-8")
    return _RESP_HEAD.pack(MAGIC, seq, STATUS_ERROR) + struct.pack("<I", len(data)) + data


class _TcpTransport:
    kind = "tcp"

    def __init__(self, host: str, port: int, timeout: float):
        self.host, self.port, self.timeout = host, port, timeout
        self.sock = None

    def open(self):
        self.close()
        self.sock = socket.create_connection((self.host, self.port), timeout=self.timeout)

    def send(self, data: bytes):
        self.sock.sendall(data)

    def recv_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining:
            chunk = self.sock.recv(remaining)
            if not chunk:
                raise ConnectionError("connection closed mid-frame")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            finally:
                self.sock = None


class _StdioTransport:
    kind = "stdio"

    def __init__(self, command: str, timeout: float):
        self.command = command
        self.timeout = timeout
        self.proc = None

    def open(self):
        self.close()
        self.proc = subprocess.Popen(
            shlex.split(self.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )

    def send(self, data: bytes):
        self.proc.stdin.write(data)
        self.proc.stdin.flush()

    def recv_exact(self, n: int) -> bytes:
        data = self.proc.stdout.read(n)
        if data is None or len(data) < n:
            raise ConnectionError("pipe closed mid-frame")
        return data

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.close()
            except Exception:
                pass
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
            self.proc = None


class DnzClient:
    """Request/response client for one denoiser endpoint.

    ``endpoint`` is ``host:port`` for TCP or ``stdio:<command>`` to spawn a
    subprocess speaking the protocol over its stdin/stdout. Transport
    failures are retried with a fresh connection up to ``retries`` times.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0, retries: int = 2):
        self.endpoint = endpoint
        self.retries = retries
        self._seq = 0
        if endpoint.startswith("stdio:"):
            self._transport = _StdioTransport(endpoint[len("stdio:"):], timeout)
        else:
            host, _, port = endpoint.rpartition(":")
            if not host or not port.isdigit():
                raise ValueError(f"endpoint must be host:port or stdio:CMD, got {endpoint!r}")
            self._transport = _TcpTransport(host, int(port), timeout)
        self._open = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        self._transport.close()
        self._open = False

    def _ensure_open(self):
        if not self._open:
            self._transport.open()
            self._open = True

    def _roundtrip(self, op: int, body_reader, **kw):
        last_err = None
        for attempt in range(self.retries + 1):
            try:
                self._ensure_open()
                self._seq += 1
                seq = self._seq
                self._transport.send(pack_request(seq, op, **kw))
                magic, rseq, status = _RESP_HEAD.unpack(self._transport.recv_exact(_RESP_HEAD.size))
                if magic != MAGIC:
                    raise ProtocolError("bad magic in response")
                if rseq != seq:
                    raise ProtocolError(f"sequence mismatch: sent {seq}, got {rseq}")
                if status == STATUS_ERROR:
                    (length,) = struct.unpack("<I", self._transport.recv_exact(4))
                    raise RemoteDenoiseError(self._transport.recv_exact(length).decode("utf-8"))
                return body_reader(self._transport)
            except (OSError, ConnectionError, EOFError) as err:
                last_err = err
                self.close()
        raise TransportError(
            f"denoiser endpoint {self.endpoint!r} failed after {self.retries + 1} attempts: {last_err}",
            retries=self.retries,
        )

    def ping(self) -> bool:
        self._roundtrip(OP_PING, lambda tr: None)
        return True

    def info(self) -> dict:
        def read(tr):
            (length,) = struct.unpack("<I", tr.recv_exact(4))
            return json.loads(tr.recv_exact(length).decode("utf-8"))

        return self._roundtrip(OP_INFO, read)

    def denoise(self, arr: np.ndarray, t_index: int, sigma_t: float, alpha_t: float) -> np.ndarray:
        arr = np.asarray(arr)
        shape = arr.shape if arr.ndim == 3 else (*arr.shape, 1)
        count = int(np.prod(shape))

        def read(tr):
            flat = np.frombuffer(tr.recv_exact(4 * count), dtype="<f4")
            return flat.reshape(shape).astype(np.float64)

        out = self._roundtrip(
            OP_DENOISE, read, t_index=t_index, sigma_t=sigma_t, alpha_t=alpha_t, payload=arr
        )
        if out.shape != shape:
            raise ProtocolError(f"response shape {out.shape} != request shape {shape}")
        return out
