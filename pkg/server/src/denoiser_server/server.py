"""DNZ1 serving loop: connection readers, a batching worker, JSON logs.

One model instance serves every connection. Reader threads parse frames and
queue them; the worker collects requests inside a short window (batching
helps checkpoint backends), runs the model, and writes each response back on
its own connection. Responses can interleave across requests of one
connection; sequence ids are authoritative. Malformed-but-framed requests
get a status-1 response and the connection stays open; a corrupted stream
(bad magic) is logged and that connection closed.
"""

from __future__ import annotations

import json
import queue
import socket
import sys
import threading
import time
from dataclasses import dataclass

from . import framing


@dataclass
class ServerConfig:
    model_source: str = "gaussian"
    prediction: str = "eps"
    bind: str | None = None  # host:port, or None for stdio mode
    max_batch: int = 8
    batch_window_ms: float = 5.0


class _Connection:
    """One client stream with serialized writes."""

    def __init__(self, read, write, name: str):
        self.read = read
        self._write = write
        self.name = name
        self._lock = threading.Lock()
        self.open = True

    def send(self, data: bytes):
        with self._lock:
            if self.open:
                try:
                    self._write(data)
                except OSError:
                    self.open = False


def _log(**fields):
    print(json.dumps(fields, sort_keys=True), file=sys.stderr, flush=True)


class DenoiserServer:
    def __init__(self, config: ServerConfig, model):
        self.config = config
        self.model = model
        self.queue: queue.Queue = queue.Queue()
        self._stop = threading.Event()

    # ------------------------------------------------------------- readers

    def _reader(self, conn: _Connection):
        while not self._stop.is_set():
            try:
                req = framing.read_request(conn.read)
            except framing.FrameError as err:
                # stream integrity is gone; answer once and drop the client
                conn.send(framing.error(0, f"malformed frame: {err}"))
                _log(event="frame_error", conn=conn.name, error=str(err))
                conn.open = False
                return
            except OSError:
                return
            if req is None:
                return
            if req.op == framing.OP_PING:
                conn.send(framing.ok_empty(req.seq))
            elif req.op == framing.OP_INFO:
                body = json.dumps(
                    {
                        "model_id": self.model.model_id,
                        "geometry": list(self.model.geometry),
                        "schedule_T": self.model.schedule_t,
                    }
                ).encode()
                conn.send(framing.ok_json(req.seq, body))
            elif req.op == framing.OP_DENOISE:
                if req.tensor is None:
                    conn.send(framing.error(req.seq, "denoise request without a payload"))
                elif not (0.0 < req.alpha_t <= 1.0) or req.sigma_t < 0.0:
                    conn.send(framing.error(req.seq, "sigma_t/alpha_t out of range"))
                else:
                    self.queue.put((conn, req))
            else:
                conn.send(framing.error(req.seq, f"unknown op {req.op}"))

    # -------------------------------------------------------------- worker

    def _collect_batch(self):
        try:
            first = self.queue.get(timeout=0.1)
        except queue.Empty:
            return []
        batch = [first]
        deadline = time.monotonic() + self.config.batch_window_ms / 1000.0
        shape = first[1].tensor.shape
        while len(batch) < self.config.max_batch:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                conn, req = self.queue.get(timeout=remaining)
            except queue.Empty:
                break
            if req.tensor.shape != shape:
                # heterogeneous shapes are served in their own batch
                self.queue.put((conn, req))
                break
            batch.append((conn, req))
        return batch

    def _worker(self):
        while not self._stop.is_set():
            batch = self._collect_batch()
            if not batch:
                continue
            t0 = time.monotonic()
            conns, reqs = zip(*batch)
            try:
                outs = self.model.denoise_batch(
                    [r.tensor for r in reqs],
                    [r.t_index for r in reqs],
                    [r.sigma_t for r in reqs],
                    [r.alpha_t for r in reqs],
                )
            except Exception as err:
                for conn, req in batch:
                    conn.send(framing.error(req.seq, f"model failure: {err}"))
                _log(event="model_error", error=str(err), batch=len(batch))
                continue
            ms = (time.monotonic() - t0) * 1000.0
            for conn, req, out in zip(conns, reqs, outs):
                conn.send(framing.ok_tensor(req.seq, out))
                _log(
                    event="denoise", seq=req.seq, t_index=req.t_index,
                    batch=len(batch), ms=round(ms, 3),
                )

    # --------------------------------------------------------------- modes

    def serve_stdio(self):
        _log(event="start", mode="stdio", model=self.model.model_id)
        worker = threading.Thread(target=self._worker, daemon=True)
        worker.start()
        stdin = sys.stdin.buffer
        stdout = sys.stdout.buffer

        def write(data: bytes):
            stdout.write(data)
            stdout.flush()

        conn = _Connection(stdin.read, write, "stdio")
        self._reader(conn)
        # drain pending work before exiting so late responses still flush
        while not self.queue.empty():
            time.sleep(0.005)
        time.sleep(self.config.batch_window_ms / 1000.0 + 0.02)
        self._stop.set()

    def serve_tcp(self, host: str, port: int, ready_event: threading.Event | None = None):
        srv = socket.socket()
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(16)
        self.bound_port = srv.getsockname()[1]
        _log(event="start", mode="tcp", port=self.bound_port, model=self.model.model_id)
        if ready_event is not None:
            ready_event.set()
        threading.Thread(target=self._worker, daemon=True).start()
        srv.settimeout(0.2)
        try:
            while not self._stop.is_set():
                try:
                    sock, addr = srv.accept()
                except socket.timeout:
                    continue
                conn = _Connection(sock.recv, sock.sendall, f"{addr[0]}:{addr[1]}")
                threading.Thread(target=self._reader_guard, args=(conn, sock), daemon=True).start()
        finally:
            srv.close()

    def _reader_guard(self, conn: _Connection, sock):
        try:
            self._reader(conn)
        finally:
            sock.close()

    def stop(self):
        self._stop.set()
