"""Line-delimited JSON protocol for external detector/recognizer processes.

The framework launches an adapter command, performs a hello/ready handshake
over the child's stdin/stdout, then exchanges one JSON message per line:

    handshake   -> {"hello": {"protocol": 1, "kind": "detector"|"recognizer"}}
                <- {"ready": {"name": "<adapter name>"}}
    detector    -> {"id": N, "image_png_b64": "..."}
                <- {"id": N, "words": [{"bbox": [x0,y0,x1,y1], "score": s}, ...]}
    recognizer  -> {"id": N, "image_png_b64": "...", "language": "..."}
                <- {"id": N, "text": "..."}
    shutdown    -> {"bye": true}   (adapter exits 0)

Every failure aborts the run with the failing request id attached.
"""
from __future__ import annotations

import base64
import json
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field

import numpy as np

from platter import imaging
from platter.geometry import BBox
from platter.pipeline import Detection, PageContext

PROTOCOL_VERSION = 1


class AdapterError(Exception):
    """Base class; request_id is None for handshake/shutdown failures."""

    def __init__(self, message: str, request_id: int | None = None):
        super().__init__(message)
        self.request_id = request_id


class ProtocolError(AdapterError):
    pass


class AdapterTimeout(AdapterError):
    pass


class AdapterCrashed(AdapterError):
    pass


@dataclass
class AdapterSpec:
    kind: str  # "detector" | "recognizer"
    command: list[str] | str
    handshake_timeout: float = 10.0
    request_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.kind not in ("detector", "recognizer"):
            raise ValueError(f"adapter kind must be detector or recognizer, got {self.kind!r}")

    def argv(self) -> list[str]:
        return shlex.split(self.command) if isinstance(self.command, str) else list(self.command)


@dataclass
class AdapterClient:
    """Single-client connection to one adapter process."""

    spec: AdapterSpec
    _proc: subprocess.Popen | None = None
    _buffer: bytes = b""
    _lines_read: int = 0
    _next_id: int = field(default=0)
    name: str = ""

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                self.spec.argv(), stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise AdapterCrashed(f"failed to launch adapter {self.spec.argv()!r}: {exc}") from exc
        self._send({"hello": {"protocol": PROTOCOL_VERSION, "kind": self.spec.kind}})
        reply = self._read_message(self.spec.handshake_timeout, request_id=None)
        ready = reply.get("ready")
        if not isinstance(ready, dict) or "name" not in ready:
            raise ProtocolError(f"expected ready handshake, got {reply!r}")
        self.name = str(ready["name"])

    def _send(self, obj: dict) -> None:
        assert self._proc is not None and self._proc.stdin is not None
        line = json.dumps(obj, ensure_ascii=False) + "\n"
        try:
            self._proc.stdin.write(line.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterCrashed(
                f"adapter pipe closed while sending: {exc}", request_id=obj.get("id")
            ) from exc

    def _read_line(self, timeout: float, request_id: int | None) -> bytes:
        assert self._proc is not None and self._proc.stdout is not None
        fd = self._proc.stdout.fileno()
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise AdapterTimeout(
                    f"adapter {self.name or self.spec.argv()!r} timed out after {timeout:.1f}s",
                    request_id=request_id,
                )
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
            if not ready:
                continue
            chunk = self._proc.stdout.read1(65536) if hasattr(self._proc.stdout, "read1") else self._proc.stdout.read(65536)
            if not chunk:
                code = self._proc.poll()
                raise AdapterCrashed(
                    f"adapter exited (code {code}) before responding", request_id=request_id
                )
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        self._lines_read += 1
        return line

    def _read_message(self, timeout: float, request_id: int | None) -> dict:
        line = self._read_line(timeout, request_id)
        try:
            msg = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(
                f"malformed adapter line {self._lines_read}: {exc}", request_id=request_id
            ) from exc
        if not isinstance(msg, dict):
            raise ProtocolError(
                f"adapter line {self._lines_read} is not a JSON object", request_id=request_id
            )
        return msg

    def roundtrip(self, request: dict) -> dict:
        """Send one request and read messages until its response arrives."""
        request_id = request["id"]
        self._send(request)
        msg = self._read_message(self.spec.request_timeout, request_id)
        if msg.get("id") != request_id:
            raise ProtocolError(
                f"adapter line {self._lines_read}: expected response id {request_id}, got {msg.get('id')!r}",
                request_id=request_id,
            )
        return msg

    def allocate_id(self) -> int:
        self._next_id += 1
        return self._next_id

    def close(self) -> None:
        if self._proc is None:
            return
        try:
            if self._proc.poll() is None:
                self._send({"bye": True})
                self._proc.wait(timeout=5.0)
        except (AdapterError, subprocess.TimeoutExpired):
            self._proc.kill()
            self._proc.wait()
        finally:
            if self._proc.stdin:
                self._proc.stdin.close()
            if self._proc.stdout:
                self._proc.stdout.close()
            self._proc = None

    def __enter__(self) -> "AdapterClient":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def run_adapter(spec: AdapterSpec, requests: list[dict]) -> list[dict]:
    """Launch an adapter, exchange the given requests, and shut it down.

    Responses are matched to requests by id and returned in request order.
    Any protocol violation, timeout, or crash aborts with the failing id.
    """
    client = AdapterClient(spec)
    client.start()
    try:
        return [client.roundtrip(req) for req in requests]
    finally:
        client.close()


def _png_b64(img: np.ndarray) -> str:
    return base64.b64encode(imaging.encode_png_bytes(img)).decode("ascii")


class AdapterDetector:
    """Detector stage backed by an external adapter process."""

    def __init__(self, command: list[str] | str, **spec_kwargs):
        self.client = AdapterClient(AdapterSpec(kind="detector", command=command, **spec_kwargs))

    def detect(self, page: np.ndarray, ctx: PageContext) -> list[Detection]:
        self.client.start()
        req = {"id": self.client.allocate_id(), "image_png_b64": _png_b64(page)}
        resp = self.client.roundtrip(req)
        words = resp.get("words")
        if not isinstance(words, list):
            raise ProtocolError(
                f"detector response {req['id']} lacks a words list", request_id=req["id"]
            )
        h, w = page.shape
        out = []
        for rec in words:
            x0, y0, x1, y1 = (int(v) for v in rec["bbox"])
            box = BBox(max(0, x0), max(0, y0), min(w, x1), min(h, y1))
            out.append(Detection(bbox=box, score=float(rec.get("score", 1.0))))
        return out

    def close(self) -> None:
        self.client.close()


class AdapterRecognizer:
    """Recognizer stage backed by an external adapter process."""

    def __init__(self, command: list[str] | str, **spec_kwargs):
        self.client = AdapterClient(AdapterSpec(kind="recognizer", command=command, **spec_kwargs))

    def recognize(self, crop: np.ndarray, box: BBox, ctx: PageContext) -> str:
        self.client.start()
        req = {
            "id": self.client.allocate_id(),
            "image_png_b64": _png_b64(imaging.mask_to_gray(crop) if crop.dtype == bool else crop),
            "language": ctx.language,
        }
        resp = self.client.roundtrip(req)
        text = resp.get("text")
        if not isinstance(text, str):
            raise ProtocolError(
                f"recognizer response {req['id']} lacks a text field", request_id=req["id"]
            )
        return text

    def close(self) -> None:
        self.client.close()
