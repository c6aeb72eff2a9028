"""Client side of the backend wire protocol.

Transport: length-prefixed frames (4-byte big-endian unsigned length, then a
UTF-8 JSON object payload with a "type" field) over a child process's
standard streams, or optionally TCP. Tensors travel as base64 of row-major
little-endian float32 bytes with an explicit [height, width] shape.

Message flow (strict request/response, one in flight):

    -> {"type": "hello", "protocol_version": 1}
    <- {"type": "hello_ack", "name": ..., "num_heads": K, "protocol_version": 1}
    -> {"type": "set_image", "width": W, "height": H, "channels": C,
        "pixels": <base64 f32>}
    <- {"type": "ack"}
    -> {"type": "predict", "prompts": [{"row": i, "col": j, "label": 0|1}, ...]}
    <- {"type": "prediction", "heads": [<base64 f32>, ...], "shape": [H, W],
        "scores": [...]?}

A backend may answer any request with {"type": "error", "message": ...}.
Any failure poisons the session: further calls raise SessionPoisonedError.
"""

from __future__ import annotations

import base64
import json
import shlex
import socket
import struct
import subprocess
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .backends import SessionStateError
from .core import BeliefEnsemble, ProbabilityMap, PromptTrace

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 64 * 1024 * 1024
VALUE_SLACK = 1e-6


class ProtocolError(RuntimeError):
    """Peer violated the wire contract."""


class FramingError(ProtocolError):
    """Byte stream is not a valid frame sequence."""


class TransportClosedError(ProtocolError):
    """Transport ended at a frame boundary."""


class BackendError(ProtocolError):
    """Backend answered with an error frame."""


class ValidationError(ProtocolError):
    """Decoded tensor payload violates its declared contract."""


class SessionPoisonedError(ProtocolError):
    """Session already failed; no silent retry."""


def encode_tensor(values: np.ndarray) -> str:
    """Base64 of the array's row-major little-endian float32 bytes."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_tensor(text: str, shape: tuple[int, ...]) -> np.ndarray:
    """Inverse of encode_tensor; bit-exact for all finite float32 values."""
    try:
        raw = base64.b64decode(text.encode("ascii"), validate=True)
    except (ValueError, UnicodeEncodeError) as exc:
        raise ValidationError(f"tensor payload is not valid base64: {exc}") from exc
    expected = 4 * int(np.prod(shape))
    if len(raw) != expected:
        raise ValidationError(
            f"tensor payload holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape)


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            break
        buf += chunk
    return buf


def write_frame(stream: BinaryIO, message: dict) -> None:
    payload = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_FRAME_BYTES:
        raise FramingError(f"frame payload of {len(payload)} bytes exceeds limit")
    stream.write(struct.pack(">I", len(payload)) + payload)
    stream.flush()


def read_frame(stream: BinaryIO) -> dict:
    header = _read_exact(stream, 4)
    if not header:
        raise TransportClosedError("transport closed")
    if len(header) < 4:
        raise FramingError(f"truncated length prefix ({len(header)} bytes)")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME_BYTES:
        raise FramingError(f"declared frame length {length} exceeds limit")
    payload = _read_exact(stream, length)
    if len(payload) < length:
        raise FramingError(f"truncated payload ({len(payload)}/{length} bytes)")
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"frame payload is not valid JSON: {exc}") from exc
    if not isinstance(message, dict) or "type" not in message:
        raise FramingError("frame payload must be a JSON object with a 'type' field")
    return message


@dataclass(frozen=True)
class BackendDescriptor:
    name: str
    num_heads: int
    protocol_version: int


class ProtocolClient:
    """A SegmenterSession talking to an external backend over the protocol.

    Construct via ``launch`` (child process on standard streams, the default
    transport) or ``connect`` (TCP), both of which perform the handshake.
    """

    def __init__(self, reader: BinaryIO, writer: BinaryIO, *, _owned=None):
        self._reader = reader
        self._writer = writer
        self._owned = _owned  # subprocess.Popen or socket to tear down
        self._poisoned = False
        self._descriptor: BackendDescriptor | None = None
        self._image_shape: tuple[int, int] | None = None
        self.name = "external"
        self.num_heads = 0

    @classmethod
    def launch(cls, cmd: str | list[str]) -> "ProtocolClient":
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                stdout=subprocess.PIPE)
        client = cls(proc.stdout, proc.stdin, _owned=proc)
        client.handshake()
        return client

    @classmethod
    def connect(cls, host: str, port: int) -> "ProtocolClient":
        sock = socket.create_connection((host, port))
        stream = sock.makefile("rwb")
        client = cls(stream, stream, _owned=sock)
        client.handshake()
        return client

    def __enter__(self) -> "ProtocolClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        try:
            self._writer.close()
        except Exception:
            pass
        if self._reader is not self._writer:
            try:
                self._reader.close()
            except Exception:
                pass
        owned = self._owned
        if isinstance(owned, subprocess.Popen):
            try:
                owned.wait(timeout=5)
            except subprocess.TimeoutExpired:
                owned.kill()
                owned.wait()
        elif isinstance(owned, socket.socket):
            owned.close()

    def _check_usable(self) -> None:
        if self._poisoned:
            raise SessionPoisonedError("session previously failed")

    def _roundtrip(self, message: dict) -> dict:
        self._check_usable()
        try:
            write_frame(self._writer, message)
            reply = read_frame(self._reader)
        except ProtocolError:
            self._poisoned = True
            raise
        except (OSError, ValueError) as exc:
            self._poisoned = True
            raise TransportClosedError(str(exc)) from exc
        if reply.get("type") == "error":
            self._poisoned = True
            raise BackendError(str(reply.get("message", "unspecified backend error")))
        return reply

    def _fail(self, exc: ProtocolError) -> ProtocolError:
        self._poisoned = True
        return exc

    def handshake(self) -> BackendDescriptor:
        reply = self._roundtrip({"type": "hello",
                                 "protocol_version": PROTOCOL_VERSION})
        if reply.get("type") != "hello_ack":
            raise self._fail(ProtocolError(f"expected hello_ack, got {reply.get('type')!r}"))
        if reply.get("protocol_version") != PROTOCOL_VERSION:
            raise self._fail(ProtocolError(
                f"protocol version mismatch: backend speaks "
                f"{reply.get('protocol_version')!r}, client speaks {PROTOCOL_VERSION}"))
        heads = reply.get("num_heads")
        if not isinstance(heads, int) or heads < 1:
            raise self._fail(ProtocolError(f"backend declared invalid num_heads {heads!r}"))
        desc = BackendDescriptor(str(reply.get("name", "")), heads,
                                 PROTOCOL_VERSION)
        self._descriptor = desc
        self.name = desc.name or "external"
        self.num_heads = desc.num_heads
        return desc

    def set_image(self, image: np.ndarray) -> None:
        if self._descriptor is None:
            raise SessionStateError("set_image before handshake")
        image = np.asarray(image)
        if image.ndim == 2:
            image = image[:, :, None]
        if image.ndim != 3:
            raise ValueError(f"image must be 2-D or 3-D, got shape {image.shape}")
        h, w, c = image.shape
        self._roundtrip({
            "type": "set_image",
            "width": w, "height": h, "channels": c,
            "pixels": encode_tensor(image.astype(np.float32)),
        })
        self._image_shape = (h, w)

    def predict(self, trace: PromptTrace) -> BeliefEnsemble:
        if self._image_shape is None:
            raise SessionStateError("predict before set_image")
        prompts = [{"row": p.design.row, "col": p.design.col, "label": p.label}
                   for p in trace.prompts]
        reply = self._roundtrip({"type": "predict", "prompts": prompts})
        if reply.get("type") != "prediction":
            raise self._fail(ProtocolError(f"expected prediction, got {reply.get('type')!r}"))
        shape = tuple(reply.get("shape", ()))
        if shape != self._image_shape:
            raise self._fail(ProtocolError(
                f"prediction shape {shape} does not match image {self._image_shape}"))
        heads = reply.get("heads")
        if not isinstance(heads, list) or len(heads) != self.num_heads:
            count = len(heads) if isinstance(heads, list) else heads
            raise self._fail(ProtocolError(
                f"backend declared {self.num_heads} heads but sent {count!r}"))
        maps = []
        for text in heads:
            try:
                arr = decode_tensor(text, shape)
            except ValidationError as exc:
                raise self._fail(exc)
            lo, hi = float(arr.min()), float(arr.max())
            if lo < -VALUE_SLACK or hi > 1.0 + VALUE_SLACK:
                raise self._fail(ValidationError(
                    f"head values outside [0,1] beyond slack: min={lo}, max={hi}"))
            maps.append(ProbabilityMap(np.clip(arr, 0.0, 1.0)))
        scores = reply.get("scores")
        if scores is not None:
            if not isinstance(scores, list) or len(scores) != len(maps):
                raise self._fail(ProtocolError("scores list does not match head count"))
            scores = tuple(float(s) for s in scores)
        return BeliefEnsemble(tuple(maps), scores)
