"""Blackbox teacher endpoints speaking newline-delimited JSON.

One request/response pair per batch, one UTF-8 JSON object per line:

    -> {"id": n, "inputs": [[...], ...]}
    <- {"id": n, "outputs": [[...], ...]}

Ids must match. The client runs over a subprocess stdio pair or a TCP
stream; any conforming external process can stand in as a teacher.
"""
from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import sys
import threading

import numpy as np

from ..errors import (TeacherIdMismatchError, TeacherProtocolError,
                      TeacherTimeoutError)
from .module import MlModule
from .signature import Signature

DEFAULT_TIMEOUT = 30.0


class _StdioTransport:
    """Line transport over a child process's stdin/stdout."""

    def __init__(self, command: str):
        self.proc = subprocess.Popen(
            shlex.split(command), stdin=subprocess.PIPE,
            stdout=subprocess.PIPE, text=True, bufsize=1)
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        assert self.proc.stdout is not None
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def send(self, line: str):
        if self.proc.poll() is not None:
            raise TeacherProtocolError("teacher process has exited")
        assert self.proc.stdin is not None
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float) -> str:
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise TeacherTimeoutError(f"teacher gave no answer within "
                                      f"{timeout:.1f}s") from None
        if line is None:
            raise TeacherProtocolError("teacher closed its output stream")
        return line

    def close(self):
        if self.proc.poll() is None:
            try:
                if self.proc.stdin:
                    self.proc.stdin.close()
                self.proc.terminate()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()


class _TcpTransport:
    """Line transport over a TCP stream."""

    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, line: str):
        self.sock.sendall((line + "\n").encode("utf-8"))

    def recv(self, timeout: float) -> str:
        self.sock.settimeout(timeout)
        try:
            line = self.rfile.readline()
        except (TimeoutError, socket.timeout):
            raise TeacherTimeoutError(f"teacher gave no answer within "
                                      f"{timeout:.1f}s") from None
        if not line:
            raise TeacherProtocolError("teacher closed the connection")
        return line

    def close(self):
        try:
            self.rfile.close()
            self.sock.close()
        except OSError:
            pass


class TeacherClient:
    """Round-trips batches through a teacher endpoint."""

    def __init__(self, transport, input_signature: Signature,
                 output_signature: Signature, timeout: float = DEFAULT_TIMEOUT):
        self.transport = transport
        self.input_signature = input_signature
        self.output_signature = output_signature
        self.timeout = float(timeout)
        self._next_id = 0

    def _encode(self, batch: np.ndarray) -> list:
        flat = batch.reshape(len(batch), -1)
        if self.input_signature.kind == "token_seq":
            return [[int(v) for v in row] for row in flat]
        return [[float(v) for v in row] for row in flat]

    def query(self, batch: np.ndarray) -> np.ndarray:
        request_id = self._next_id
        self._next_id += 1
        self.transport.send(json.dumps({"id": request_id,
                                        "inputs": self._encode(batch)}))
        line = self.transport.recv(self.timeout)
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TeacherProtocolError(f"malformed teacher line: {exc}") from exc
        if not isinstance(reply, dict):
            raise TeacherProtocolError(f"teacher reply is not an object: {reply!r}")
        if "error" in reply:
            raise TeacherProtocolError(f"teacher error: {reply['error']}")
        if reply.get("id") != request_id:
            raise TeacherIdMismatchError(f"teacher answered id {reply.get('id')!r} "
                                         f"to request {request_id}")
        outputs = reply.get("outputs")
        if not isinstance(outputs, list) or len(outputs) != len(batch):
            raise TeacherProtocolError(
                f"teacher returned {0 if not isinstance(outputs, list) else len(outputs)} "
                f"outputs for {len(batch)} inputs")
        try:
            arr = np.asarray(outputs, dtype=np.float32)
            return arr.reshape((len(batch),) + self.output_signature.dims)
        except (ValueError, TypeError) as exc:
            raise TeacherProtocolError(f"teacher outputs do not match "
                                       f"{self.output_signature}: {exc}") from exc

    def close(self):
        self.transport.close()


def external_teacher(input_signature: Signature, output_signature: Signature,
                     command: str | None = None, address: str | None = None,
                     timeout: float = DEFAULT_TIMEOUT, module_id: str = "teacher",
                     batch_size: int = 64) -> MlModule:
    """Wrap an endpoint (subprocess command or host:port) as an MlModule."""
    if (command is None) == (address is None):
        raise ValueError("pass exactly one of command= or address=")
    if command is not None:
        transport = _StdioTransport(command)
    else:
        host, _, port = address.rpartition(":")
        transport = _TcpTransport(host or "127.0.0.1", int(port), timeout)
    client = TeacherClient(transport, input_signature, output_signature, timeout)
    module = MlModule.from_function(
        module_id, client.query, input_signature, output_signature,
        metadata={"task": "external-teacher",
                  "endpoint": command or address}, batch_size=batch_size)
    module.client = client
    return module


# -- server side ---------------------------------------------------------------

def _serve_lines(predict_fn, input_dims: tuple, rfile, wfile):
    for line in rfile:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            request_id = obj["id"]
            x = np.asarray(obj["inputs"], dtype=np.float64)
            x = x.reshape((len(x),) + tuple(input_dims))
            out = predict_fn(x)
            reply = {"id": request_id,
                     "outputs": [[float(v) for v in row]
                                 for row in np.asarray(out).reshape(len(x), -1)]}
        except Exception as exc:  # report and keep serving
            reply = {"id": obj.get("id", -1) if isinstance(obj, dict) else -1,
                     "error": f"{type(exc).__name__}: {exc}"}
        wfile.write(json.dumps(reply) + "\n")
        wfile.flush()


def serve_stdio(predict_fn, input_dims: tuple):
    """Serve the wire protocol over this process's stdin/stdout."""
    _serve_lines(predict_fn, input_dims, sys.stdin, sys.stdout)


def serve_tcp(predict_fn, input_dims: tuple, host: str = "127.0.0.1",
              port: int = 0):
    """Serve one connection over TCP; returns (server_socket, bound_port).

    The caller owns the socket; serving runs on a daemon thread.
    """
    server = socket.create_server((host, port))
    bound_port = server.getsockname()[1]

    def run():
        conn, _ = server.accept()
        with conn:
            rfile = conn.makefile("r", encoding="utf-8", newline="\n")
            wfile = conn.makefile("w", encoding="utf-8", newline="\n")
            _serve_lines(predict_fn, input_dims, rfile, wfile)

    threading.Thread(target=run, daemon=True).start()
    return server, bound_port
