"""Logit-backend abstraction and the newline-delimited JSON wire protocol.

A backend is any object satisfying the ``Backend`` protocol below. Two
implementations ship with the package: ``WireBackend`` here, which talks
the wire protocol to a subprocess or TCP peer, and the in-process mock in
``segue.mockbackend``.

Wire framing: one UTF-8 JSON object per line in each direction. Requests
carry a client-unique ``id`` which the response echoes; responses may
arrive out of order and are matched by id. Full message schemas live in
protocol.md at the repository root.
"""

from __future__ import annotations

import base64
import json
import logging
import queue
import socket
import subprocess
import threading
from dataclasses import dataclass
from typing import IO, Any, Callable, Protocol, Sequence, runtime_checkable

import numpy as np

from .errors import (
    BackendError,
    BackendTimeoutError,
    CapacityError,
    HandshakeError,
    InputError,
    ParameterError,
    ProtocolError,
    UnsupportedOperationError,
)
from .score import Prompt
from .tokenio import TokenFrame

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "1.0"

DEFAULT_HANDSHAKE_TIMEOUT = 30.0
DEFAULT_REQUEST_TIMEOUT = 60.0

ERROR_CODES = ("capacity", "bad_request", "unsupported", "internal")


@dataclass(frozen=True)
class BackendInfo:
    """A backend's declared capabilities, as returned by handshake."""

    name: str
    vocab_size: int
    channels: int
    frame_rate: float
    max_context_frames: int
    supports_decode: bool
    protocol_version: str = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise InputError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.channels < 1:
            raise InputError(f"channels must be >= 1, got {self.channels}")
        if not self.frame_rate > 0:
            raise InputError(f"frame_rate must be > 0, got {self.frame_rate}")
        if self.max_context_frames < 1:
            raise InputError(f"max_context_frames must be >= 1, got {self.max_context_frames}")


@dataclass
class ContextHandle:
    """Opaque backend-side generation context; ``position`` counts the
    frames fed so far."""

    id: int
    position: int = 0


@dataclass(frozen=True)
class DecodeInfo:
    path: str
    duration_seconds: float
    sample_rate: int
    frame_count: int


@runtime_checkable
class Backend(Protocol):
    """What the decoding engine needs from a logit source."""

    def handshake(self) -> BackendInfo: ...

    def new_context(self, prompt: Prompt) -> ContextHandle: ...

    def append(self, ctx: ContextHandle, frames: Sequence[TokenFrame]) -> None: ...

    def logits(self, ctx: ContextHandle) -> np.ndarray: ...

    def logits_many(self, ctxs: Sequence[ContextHandle]) -> list[np.ndarray]: ...

    def decode(self, frames: Sequence[TokenFrame], output_path: str) -> DecodeInfo: ...

    def free_context(self, ctx: ContextHandle) -> None: ...

    def close(self) -> None: ...


def major_version(version: str) -> int:
    try:
        return int(str(version).split(".", 1)[0])
    except ValueError:
        raise ProtocolError(f"malformed protocol version {version!r}") from None


# ---------------------------------------------------------------------------
# Transports: line-oriented byte pipes with timeouts.
# ---------------------------------------------------------------------------


class _LineReader:
    """Background thread draining a text stream into a queue so reads can
    carry timeouts. A ``None`` item marks end of stream."""

    def __init__(self, stream: IO[str]):
        self._queue: queue.Queue[str | None] = queue.Queue()
        self._thread = threading.Thread(target=self._run, args=(stream,), daemon=True)
        self._thread.start()

    def _run(self, stream: IO[str]) -> None:
        try:
            for line in stream:
                self._queue.put(line)
        except ValueError:
            pass  # stream closed under us
        finally:
            self._queue.put(None)

    def readline(self, timeout: float) -> str:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise BackendTimeoutError(f"backend sent nothing for {timeout:g} s") from None
        if item is None:
            raise ProtocolError("backend closed the connection")
        return item


class SubprocessTransport:
    """Spawns the backend as a child process and frames lines over its
    standard input/output streams. Stderr passes through untouched."""

    def __init__(self, argv: Sequence[str]):
        if not argv:
            raise ParameterError("backend command is empty")
        try:
            self._proc = subprocess.Popen(
                list(argv),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot start backend {argv[0]!r}: {exc}") from None
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._reader = _LineReader(self._proc.stdout)

    def send_line(self, line: str) -> None:
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"backend pipe closed: {exc}") from None

    def recv_line(self, timeout: float) -> str:
        return self._reader.readline(timeout)

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class TcpTransport:
    """Same framing over a TCP connection to ``host:port``."""

    def __init__(self, host: str, port: int, connect_timeout: float = 10.0):
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise BackendError(f"cannot connect to backend at {host}:{port}: {exc}") from None
        self._sock.settimeout(None)
        self._wfile = self._sock.makefile("w", encoding="utf-8", newline="\n")
        self._reader = _LineReader(self._sock.makefile("r", encoding="utf-8"))

    def send_line(self, line: str) -> None:
        try:
            self._wfile.write(line + "\n")
            self._wfile.flush()
        except OSError as exc:
            raise ProtocolError(f"backend socket closed: {exc}") from None

    def recv_line(self, timeout: float) -> str:
        return self._reader.readline(timeout)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class Transport(Protocol):
    def send_line(self, line: str) -> None: ...

    def recv_line(self, timeout: float) -> str: ...

    def close(self) -> None: ...


# ---------------------------------------------------------------------------
# Client.
# ---------------------------------------------------------------------------


class WireBackend:
    """Protocol client. Serializes writes; multiple requests may be in
    flight at once and responses are matched to requests by id.

    ``logits_encoding`` may be "b64f32" to request logits packed as
    base64 little-endian float32 instead of JSON numbers. ``transcript``,
    when given, receives every raw wire line prefixed with ">" (sent) or
    "<" (received), in order.
    """

    def __init__(
        self,
        transport: Transport,
        *,
        handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
        request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
        logits_encoding: str | None = None,
        transcript: list[str] | None = None,
    ):
        if logits_encoding not in (None, "b64f32"):
            raise ParameterError(f"unknown logits encoding {logits_encoding!r}")
        self._transport = transport
        self._handshake_timeout = handshake_timeout
        self._request_timeout = request_timeout
        self._logits_encoding = logits_encoding
        self._transcript = transcript
        self._next_id = 1
        self._pending: dict[int, dict[str, Any]] = {}
        self._write_lock = threading.Lock()
        self._info: BackendInfo | None = None

    @classmethod
    def from_command(cls, argv: Sequence[str], **kwargs: Any) -> "WireBackend":
        return cls(SubprocessTransport(argv), **kwargs)

    @classmethod
    def from_tcp(cls, host: str, port: int, **kwargs: Any) -> "WireBackend":
        return cls(TcpTransport(host, port), **kwargs)

    # -- plumbing ----------------------------------------------------------

    def _send(self, op: str, fields: dict[str, Any]) -> int:
        rid = self._next_id
        self._next_id += 1
        message: dict[str, Any] = {"id": rid, "op": op}
        message.update(fields)
        line = json.dumps(message, sort_keys=True)
        with self._write_lock:
            self._transport.send_line(line)
        if self._transcript is not None:
            self._transcript.append(">" + line)
        return rid

    def _wait(self, rid: int, timeout: float) -> dict[str, Any]:
        while True:
            if rid in self._pending:
                return self._pending.pop(rid)
            line = self._transport.recv_line(timeout)
            if self._transcript is not None:
                self._transcript.append("<" + line.rstrip("\n"))
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"backend sent malformed JSON: {exc.msg}") from None
            if not isinstance(reply, dict) or "id" not in reply:
                raise ProtocolError(f"backend reply lacks an id: {line.strip()!r}")
            if reply["id"] == rid:
                return reply
            self._pending[reply["id"]] = reply

    def _finish(self, reply: dict[str, Any], op: str) -> dict[str, Any]:
        if reply.get("ok") is True:
            return reply
        error = reply.get("error") or {}
        code = error.get("code", "internal")
        message = error.get("message", "no message")
        if code == "capacity":
            raise CapacityError(message)
        if code == "unsupported":
            raise UnsupportedOperationError(message)
        raise ProtocolError(f"{op} failed: {message}", code=code)

    def _request(self, op: str, timeout: float | None = None, **fields: Any) -> dict[str, Any]:
        rid = self._send(op, fields)
        reply = self._wait(rid, timeout if timeout is not None else self._request_timeout)
        return self._finish(reply, op)

    @staticmethod
    def _require(reply: dict[str, Any], field_name: str) -> Any:
        if field_name not in reply:
            raise ProtocolError(f"backend reply missing required field {field_name!r}")
        return reply[field_name]

    # -- protocol operations ----------------------------------------------

    def handshake(self) -> BackendInfo:
        if self._info is not None:
            return self._info
        reply = self._request(
            "handshake", timeout=self._handshake_timeout, protocol_version=PROTOCOL_VERSION
        )
        theirs = str(self._require(reply, "protocol_version"))
        if major_version(theirs) != major_version(PROTOCOL_VERSION):
            raise HandshakeError(
                f"protocol major version mismatch: client speaks {PROTOCOL_VERSION}, "
                f"backend speaks {theirs}"
            )
        try:
            info = BackendInfo(
                name=str(self._require(reply, "name")),
                vocab_size=int(self._require(reply, "vocab_size")),
                channels=int(self._require(reply, "channels")),
                frame_rate=float(self._require(reply, "frame_rate")),
                max_context_frames=int(self._require(reply, "max_context_frames")),
                supports_decode=bool(self._require(reply, "supports_decode")),
                protocol_version=theirs,
            )
        except InputError as exc:
            raise HandshakeError(f"backend declared invalid capabilities: {exc}") from None
        self._info = info
        log.debug("handshake complete: %s", info)
        return info

    def new_context(self, prompt: Prompt) -> ContextHandle:
        fields: dict[str, Any] = {"prompt": prompt.text}
        if prompt.guidance_scale is not None:
            fields["guidance_scale"] = prompt.guidance_scale
        reply = self._request("new_context", **fields)
        return ContextHandle(id=int(self._require(reply, "context")))

    def append(self, ctx: ContextHandle, frames: Sequence[TokenFrame]) -> None:
        reply = self._request(
            "append", context=ctx.id, frames=[list(f.channels) for f in frames]
        )
        ctx.position = int(self._require(reply, "position"))

    def _parse_logits(self, reply: dict[str, Any]) -> np.ndarray:
        raw = self._require(reply, "logits")
        if reply.get("encoding") == "b64f32":
            rows = []
            for item in raw:
                buf = base64.b64decode(item)
                rows.append(np.frombuffer(buf, dtype="<f4").astype(np.float64))
            matrix = np.stack(rows) if rows else np.empty((0, 0))
        else:
            matrix = np.asarray(raw, dtype=np.float64)
        if self._info is not None:
            expected = (self._info.channels, self._info.vocab_size)
            if matrix.shape != expected:
                raise ProtocolError(
                    f"logits shape {matrix.shape} does not match declared {expected}"
                )
        if not np.all(np.isfinite(matrix)):
            raise ProtocolError("backend sent non-finite logits")
        return matrix

    def logits(self, ctx: ContextHandle) -> np.ndarray:
        return self.logits_many([ctx])[0]

    def logits_many(self, ctxs: Sequence[ContextHandle]) -> list[np.ndarray]:
        """Query several contexts in one round trip group.

        All requests go out before any response is awaited, so a slow
        backend can overlap the work; replies are matched by id whatever
        order they arrive in.
        """
        fields: dict[str, Any] = {}
        if self._logits_encoding is not None:
            fields["encoding"] = self._logits_encoding
        rids = [self._send("logits", {"context": ctx.id, **fields}) for ctx in ctxs]
        out = []
        for rid in rids:
            reply = self._finish(self._wait(rid, self._request_timeout), "logits")
            out.append(self._parse_logits(reply))
        return out

    def decode(self, frames: Sequence[TokenFrame], output_path: str) -> DecodeInfo:
        reply = self._request(
            "decode",
            frames=[list(f.channels) for f in frames],
            path=str(output_path),
        )
        return DecodeInfo(
            path=str(self._require(reply, "path")),
            duration_seconds=float(self._require(reply, "duration_seconds")),
            sample_rate=int(self._require(reply, "sample_rate")),
            frame_count=int(self._require(reply, "frame_count")),
        )

    def free_context(self, ctx: ContextHandle) -> None:
        self._request("free", context=ctx.id)

    def close(self) -> None:
        self._transport.close()


# ---------------------------------------------------------------------------
# Server loop: shared by any Python backend that speaks the protocol
# (the mock backend uses it; see protocol.md for the message reference).
# ---------------------------------------------------------------------------


def error_reply(rid: Any, code: str, message: str) -> dict[str, Any]:
    return {"id": rid, "ok": False, "error": {"code": code, "message": message}}


def serve_lines(
    handler: Callable[[dict[str, Any]], dict[str, Any]],
    reader: IO[str],
    writer: IO[str],
) -> None:
    """Run a request/response loop over line streams until EOF.

    ``handler`` maps one request object to one response object; any
    exception it raises is converted to the documented error codes.
    """
    for line in reader:
        line = line.strip()
        if not line:
            continue
        rid: Any = None
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ProtocolError("request must be a JSON object")
            rid = request.get("id")
            if rid is None:
                raise ProtocolError("request lacks an id")
            reply = handler(request)
            reply["id"] = rid
        except Exception as exc:  # every failure becomes a coded reply
            reply = error_reply(rid, _code_for(exc), str(exc))
        writer.write(json.dumps(reply, sort_keys=True) + "\n")
        writer.flush()


def _code_for(exc: Exception) -> str:
    if isinstance(exc, CapacityError):
        return "capacity"
    if isinstance(exc, UnsupportedOperationError):
        return "unsupported"
    if isinstance(exc, (ProtocolError, InputError, ParameterError, json.JSONDecodeError)):
        return "bad_request"
    return "internal"
