"""Detector contract and implementations.

Three kinds share one surface: a scripted oracle driven by ground truth,
a motion-energy heuristic, and a client for an external detector process
speaking a length-prefixed binary protocol over stdio pipes.

Wire format, bit-exact: u32 big-endian header length, UTF-8 JSON header,
then the raw payload. The header is a JSON object with an "op" field
(hello / infer / result / error); an infer payload is dims-many u8
bytes, window-major and row-major per frame, so the payload length is
always derivable from the header.
"""

from __future__ import annotations

import json
import os
import selectors
import struct
import subprocess
import time
from dataclasses import dataclass
from typing import Optional, Union

from .core import DetectionResult, DiffWindow, Frame, ScoreVector, SOURCE_VIDEO
from .preprocess import motion_energy
from .rng import uniform_at

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 1.0
MAX_HEADER_BYTES = 1 << 20

ORACLE_HIT_SCORE = 0.9
ORACLE_MISS_SCORE = 0.1
ORACLE_DRAW_PURPOSE = "oracle"


class DetectorError(Exception):
    """The detector reported a failure for this request."""


class ProtocolError(Exception):
    """The peer violated the wire protocol (framing, ids, ranges)."""


class TransportError(Exception):
    """The transport failed: launch, timeout, truncation, closed pipe."""


@dataclass(frozen=True)
class OracleKind:
    """Scripted detector: Bernoulli(tpr) on violent truth, Bernoulli(fpr) otherwise."""

    tpr: float
    fpr: float
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.tpr <= 1.0) or not (0.0 <= self.fpr <= 1.0):
            raise ValueError(f"tpr and fpr must be in [0, 1], got {self.tpr}, {self.fpr}")


@dataclass(frozen=True)
class HeuristicKind:
    """Motion-energy detector: score = min(1, energy / kappa)."""

    kappa: float

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


@dataclass(frozen=True)
class SidecarKind:
    """External detector process launched with the given argv."""

    cmd: tuple
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        object.__setattr__(self, "cmd", tuple(self.cmd))
        if not self.cmd:
            raise ValueError("sidecar command must be nonempty")
        if self.timeout <= 0:
            raise ValueError(f"timeout must be > 0, got {self.timeout}")


DetectorKind = Union[OracleKind, HeuristicKind, SidecarKind]


# --------------------------------------------------------------------------
# wire framing


@dataclass(frozen=True)
class WireMessage:
    """One protocol frame: raw JSON header text plus payload bytes."""

    header_json: str
    payload: bytes = b""

    def header(self) -> dict:
        obj = json.loads(self.header_json)
        if not isinstance(obj, dict) or "op" not in obj:
            raise ProtocolError("header must be a JSON object with an 'op' field")
        return obj

    def to_bytes(self) -> bytes:
        raw = self.header_json.encode("utf-8")
        return struct.pack(">I", len(raw)) + raw + self.payload


def make_message(header: dict, payload: bytes = b"") -> WireMessage:
    # Compact separators; key order is the dict's insertion order.
    return WireMessage(header_json=json.dumps(header, separators=(",", ":")), payload=payload)


def payload_length(header: dict) -> int:
    """Expected payload byte count implied by a parsed header."""
    if header.get("op") != "infer":
        return 0
    dims = header.get("dims")
    if (not isinstance(dims, list) or len(dims) != 3
            or not all(isinstance(d, int) and d >= 1 for d in dims)):
        raise ProtocolError(f"infer header needs dims [L, H, W] of positive ints, got {dims!r}")
    if header.get("dtype") != "u8":
        raise ProtocolError(f"unsupported dtype {header.get('dtype')!r}")
    return dims[0] * dims[1] * dims[2]


def parse_message(data: bytes, offset: int = 0):
    """Parse one frame from a byte buffer; returns (WireMessage, next_offset).

    Raises TransportError on truncation and ProtocolError on a bad header.
    """
    if len(data) - offset < 4:
        raise TransportError("buffer ends inside the length prefix")
    (header_len,) = struct.unpack_from(">I", data, offset)
    if header_len > MAX_HEADER_BYTES:
        raise ProtocolError(f"header length {header_len} exceeds limit")
    start = offset + 4
    if len(data) - start < header_len:
        raise TransportError("buffer ends inside the header")
    try:
        header_json = data[start:start + header_len].decode("utf-8")
        header = json.loads(header_json)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"unparseable header: {exc}") from exc
    if not isinstance(header, dict) or "op" not in header:
        raise ProtocolError("header must be a JSON object with an 'op' field")
    body_start = start + header_len
    n_payload = payload_length(header)
    if len(data) - body_start < n_payload:
        raise TransportError("buffer ends inside the payload")
    payload = data[body_start:body_start + n_payload]
    return WireMessage(header_json=header_json, payload=payload), body_start + n_payload


def hello_message() -> WireMessage:
    return make_message({"op": "hello", "version": PROTOCOL_VERSION})


def encode_request(stream: str, request_id: int, dw: DiffWindow) -> WireMessage:
    """Frame one inference request; payload is the window's raw bytes."""
    header = {
        "op": "infer",
        "stream": stream,
        "request_id": int(request_id),
        "dims": [dw.length, dw.height, dw.width],
        "dtype": "u8",
    }
    return make_message(header, dw.payload())


def decode_request(msg: WireMessage) -> DiffWindow:
    """Rebuild the DiffWindow from an infer message (inverse of encode_request)."""
    header = msg.header()
    if header.get("op") != "infer":
        raise ProtocolError(f"expected op=infer, got {header.get('op')!r}")
    expected = payload_length(header)
    if len(msg.payload) != expected:
        raise TransportError(
            f"payload truncated: expected {expected} bytes, got {len(msg.payload)}"
        )
    length, h, w = header["dims"]
    frame_size = h * w
    diffs = tuple(
        Frame(width=w, height=h, pixels=msg.payload[k * frame_size:(k + 1) * frame_size], index=k)
        for k in range(length)
    )
    return DiffWindow(stream=header["stream"], diffs=diffs)


def decode_response(msg: WireMessage, expected_id: int) -> ScoreVector:
    """Validate a result frame and extract the scores.

    An error frame raises DetectorError with the peer's message; a
    request-id mismatch or out-of-range score raises ProtocolError.
    """
    header = msg.header()
    op = header.get("op")
    if op == "error":
        raise DetectorError(str(header.get("message", "unspecified detector error")))
    if op != "result":
        raise ProtocolError(f"expected op=result, got {op!r}")
    if header.get("request_id") != expected_id:
        raise ProtocolError(
            f"request_id mismatch: expected {expected_id}, got {header.get('request_id')!r}"
        )
    scores = header.get("scores")
    if not isinstance(scores, list) or not scores:
        raise ProtocolError(f"result needs a nonempty scores list, got {scores!r}")
    for s in scores:
        if not isinstance(s, (int, float)) or not (0.0 <= s <= 1.0):
            raise ProtocolError(f"score out of range: {s!r}")
    return ScoreVector(tuple(float(s) for s in scores))


# --------------------------------------------------------------------------
# in-process detectors


def decide(scores: ScoreVector, threshold: float) -> bool:
    """Decision statistic is the mean score; detected iff it exceeds the threshold."""
    return scores.mean() > threshold


class OracleDetector:
    """Consults ground truth and a counter-based coin keyed (seed, stream, cycle).

    A hit emits 0.9 and a miss 0.1, keeping confidence dynamics away from
    saturation while both sides clear a 0.5 threshold decision.
    """

    def __init__(self, kind: OracleKind, threshold: float = 0.5, seed: int = 0,
                 horizon: Optional[int] = None):
        self.kind = kind
        self.threshold = threshold
        self.seed = kind.seed if kind.seed is not None else seed
        self.horizon = horizon
        self._draws: dict = {}

    def _uniform(self, stream: str, cycle: int) -> float:
        if self.horizon is not None and cycle < self.horizon:
            arr = self._draws.get(stream)
            if arr is None:
                from .rng import uniforms

                arr = uniforms(self.seed, ORACLE_DRAW_PURPOSE, stream, self.horizon)
                self._draws[stream] = arr
            return float(arr[cycle])
        return uniform_at(self.seed, ORACLE_DRAW_PURPOSE, stream, cycle)

    def score(self, stream: str, cycle: int, truth: bool) -> float:
        u = self._uniform(stream, cycle)
        fired = u < (self.kind.tpr if truth else self.kind.fpr)
        return ORACLE_HIT_SCORE if fired else ORACLE_MISS_SCORE

    def detect(self, dw: DiffWindow, cycle: int, truth: Optional[bool] = None) -> DetectionResult:
        if truth is None:
            raise ValueError("the oracle detector requires a truth flag")
        scores = ScoreVector((self.score(dw.stream, cycle, truth),))
        return DetectionResult(stream=dw.stream, cycle=cycle, scores=scores,
                               detected=decide(scores, self.threshold), source=SOURCE_VIDEO)


class HeuristicDetector:
    """Thresholded motion energy; pure function of the window."""

    def __init__(self, kind: HeuristicKind, threshold: float = 0.5):
        self.kind = kind
        self.threshold = threshold

    def detect(self, dw: DiffWindow, cycle: int, truth: Optional[bool] = None) -> DetectionResult:
        score = min(1.0, motion_energy(dw) / self.kind.kappa)
        scores = ScoreVector((score,))
        return DetectionResult(stream=dw.stream, cycle=cycle, scores=scores,
                               detected=decide(scores, self.threshold), source=SOURCE_VIDEO)


# --------------------------------------------------------------------------
# sidecar client


class _PipeReader:
    """Incremental reader over a pipe fd with a deadline per frame."""

    def __init__(self, fileobj):
        self._file = fileobj
        self._sel = selectors.DefaultSelector()
        self._sel.register(fileobj, selectors.EVENT_READ)
        self._buf = bytearray()

    def read_exact(self, n: int, deadline: float) -> bytes:
        while len(self._buf) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TransportError("timed out waiting for sidecar response")
            if not self._sel.select(timeout=remaining):
                continue
            chunk = os.read(self._file.fileno(), 65536)
            if not chunk:
                raise TransportError("sidecar closed the connection mid-frame")
            self._buf.extend(chunk)
        out = bytes(self._buf[:n])
        del self._buf[:n]
        return out

    def close(self) -> None:
        self._sel.close()


class SidecarClient:
    """Connection-owning client for one external detector process.

    Not safe for concurrent use; run one client per worker. The
    handshake pins the protocol version before any inference.
    """

    def __init__(self, kind: SidecarKind, threshold: float = 0.5):
        self.kind = kind
        self.threshold = threshold
        self._proc: Optional[subprocess.Popen] = None
        self._reader: Optional[_PipeReader] = None
        self._next_id = 0

    # -- lifecycle -----------------------------------------------------

    def start(self) -> None:
        if self._proc is not None:
            return
        try:
            self._proc = subprocess.Popen(
                list(self.kind.cmd),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise TransportError(f"failed to launch sidecar: {exc}") from exc
        self._reader = _PipeReader(self._proc.stdout)
        reply = self._roundtrip(hello_message())
        header = reply.header()
        if header.get("op") != "hello" or header.get("version") != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(f"handshake failed, peer sent {reply.header_json}")

    def close(self) -> None:
        if self._reader is not None:
            self._reader.close()
            self._reader = None
        if self._proc is not None:
            try:
                if self._proc.stdin:
                    self._proc.stdin.close()
                self._proc.wait(timeout=2.0)
            except Exception:
                self._proc.kill()
            self._proc = None

    def __enter__(self) -> "SidecarClient":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- protocol ---------------------------------------------------------

    def _roundtrip(self, msg: WireMessage) -> WireMessage:
        if self._proc is None or self._proc.stdin is None or self._reader is None:
            raise TransportError("sidecar is not running")
        deadline = time.monotonic() + self.kind.timeout
        try:
            self._proc.stdin.write(msg.to_bytes())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"sidecar pipe closed: {exc}") from exc
        (header_len,) = struct.unpack(">I", self._reader.read_exact(4, deadline))
        if header_len > MAX_HEADER_BYTES:
            raise ProtocolError(f"header length {header_len} exceeds limit")
        header_raw = self._reader.read_exact(header_len, deadline)
        try:
            header_json = header_raw.decode("utf-8")
            header = json.loads(header_json)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"unparseable header from sidecar: {exc}") from exc
        if not isinstance(header, dict) or "op" not in header:
            raise ProtocolError("header must be a JSON object with an 'op' field")
        payload = self._reader.read_exact(payload_length(header), deadline)
        return WireMessage(header_json=header_json, payload=payload)

    def detect(self, dw: DiffWindow, cycle: int, truth: Optional[bool] = None) -> DetectionResult:
        if self._proc is None:
            self.start()
        request_id = self._next_id
        self._next_id += 1
        reply = self._roundtrip(encode_request(dw.stream, request_id, dw))
        scores = decode_response(reply, request_id)
        return DetectionResult(stream=dw.stream, cycle=cycle, scores=scores,
                               detected=decide(scores, self.threshold), source=SOURCE_VIDEO)


# --------------------------------------------------------------------------
# dispatch


def build_detector(kind: DetectorKind, threshold: float = 0.5, seed: int = 0,
                   horizon: Optional[int] = None):
    if isinstance(kind, OracleKind):
        return OracleDetector(kind, threshold=threshold, seed=seed, horizon=horizon)
    if isinstance(kind, HeuristicKind):
        return HeuristicDetector(kind, threshold=threshold)
    if isinstance(kind, SidecarKind):
        return SidecarClient(kind, threshold=threshold)
    raise TypeError(f"unknown detector kind {kind!r}")


def detect(kind: DetectorKind, dw: DiffWindow, cycle: int = 0,
           truth: Optional[bool] = None, threshold: float = 0.5,
           seed: int = 0) -> DetectionResult:
    """One-shot detection over a window; see build_detector for reuse."""
    det = build_detector(kind, threshold=threshold, seed=seed)
    try:
        return det.detect(dw, cycle, truth)
    finally:
        if isinstance(det, SidecarClient):
            det.close()
