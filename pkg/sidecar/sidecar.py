#!/usr/bin/env python3
"""Reference external detector process.

Speaks the length-prefixed binary protocol over stdio (default) or a
TCP port: u32 big-endian header length, UTF-8 JSON header, raw payload.
Ops: hello / infer / result / error. An infer payload is dims [L, H, W]
of u8 bytes, window-major, row-major per frame.

Modes:
  heuristic  score = min(1, motion_energy / kappa), one score per window,
             where motion_energy accumulates the integer sum of squared
             diff pixels and divides once by count * 255^2 (bitwise
             reproducible by independent implementations).
  echo       reply with a fixed score vector, for protocol tests.

Malformed-but-framed requests get an error reply and service continues;
a framing desync gets one error frame and a nonzero exit, no
resynchronization attempted. Intentionally standalone: standard library
only, so it doubles as a template for non-Python detector processes.
"""

from __future__ import annotations

import argparse
import json
import socket
import struct
import sys
import time

PROTOCOL_VERSION = 1
FULL_SCALE_SQ = 255 * 255


class FramingError(Exception):
    """The byte stream desynchronized; the connection is unrecoverable."""


class RequestError(Exception):
    """A well-framed request was malformed; reply and keep serving."""


def pack_message(header: dict, payload: bytes = b"") -> bytes:
    raw = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(raw)) + raw + payload


def read_exact(stream, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            if buf:
                raise FramingError("stream ended mid-frame")
            return b""
        buf += chunk
    return buf


def read_message(stream):
    """Returns (header dict, payload bytes), or None on clean end-of-input."""
    prefix = read_exact(stream, 4)
    if not prefix:
        return None
    (header_len,) = struct.unpack(">I", prefix)
    if header_len == 0 or header_len > (1 << 20):
        raise FramingError(f"implausible header length {header_len}")
    raw = read_exact(stream, header_len)
    if len(raw) < header_len:
        raise FramingError("stream ended inside the header")
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FramingError(f"header is not valid JSON: {exc}")
    if not isinstance(header, dict) or "op" not in header:
        raise FramingError("header must be a JSON object with an 'op' field")
    payload = b""
    if header.get("op") == "infer":
        dims = header.get("dims")
        if (not isinstance(dims, list) or len(dims) != 3
                or not all(isinstance(d, int) and d >= 1 for d in dims)):
            raise RequestError(f"infer needs dims [L, H, W] of positive ints, got {dims!r}")
        if header.get("dtype") != "u8":
            raise RequestError(f"unsupported dtype {header.get('dtype')!r}")
        n = dims[0] * dims[1] * dims[2]
        payload = read_exact(stream, n)
        if len(payload) < n:
            raise FramingError("stream ended inside the payload")
    return header, payload


def motion_energy(payload: bytes) -> float:
    total = 0
    for b in payload:
        total += b * b
    return total / (len(payload) * FULL_SCALE_SQ)


class Server:
    def __init__(self, mode: str, kappa: float, fixed_scores, latency_ms: float):
        self.mode = mode
        self.kappa = kappa
        self.fixed_scores = fixed_scores
        self.latency_ms = latency_ms

    def scores_for(self, payload: bytes):
        if self.mode == "echo":
            return list(self.fixed_scores)
        return [min(1.0, motion_energy(payload) / self.kappa)]

    def handle(self, header: dict, payload: bytes) -> bytes:
        op = header.get("op")
        if op == "hello":
            if header.get("version") != PROTOCOL_VERSION:
                raise RequestError(
                    f"unsupported protocol version {header.get('version')!r}")
            return pack_message({"op": "hello", "version": PROTOCOL_VERSION})
        if op == "infer":
            request_id = header.get("request_id")
            if not isinstance(request_id, int):
                raise RequestError(f"infer needs an integer request_id, got {request_id!r}")
            if self.latency_ms > 0:
                time.sleep(self.latency_ms / 1000.0)
            return pack_message({"op": "result", "request_id": request_id,
                                 "scores": self.scores_for(payload)})
        raise RequestError(f"unknown op {op!r}")

    def serve(self, rstream, wstream) -> int:
        """Answer frames until end-of-input; returns the exit code."""
        while True:
            try:
                msg = read_message(rstream)
            except RequestError as exc:
                wstream.write(pack_message({"op": "error", "message": str(exc)}))
                wstream.flush()
                continue
            except FramingError as exc:
                wstream.write(pack_message({"op": "error", "message": str(exc)}))
                wstream.flush()
                return 1
            if msg is None:
                return 0
            header, payload = msg
            try:
                reply = self.handle(header, payload)
            except RequestError as exc:
                reply = pack_message({"op": "error", "message": str(exc)})
            wstream.write(reply)
            wstream.flush()


def parse_scores(text: str):
    scores = [float(v) for v in text.split(",") if v.strip()]
    if not scores or any(not 0.0 <= s <= 1.0 for s in scores):
        raise argparse.ArgumentTypeError("scores must be in [0, 1]")
    return scores


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sidecar", description=__doc__.splitlines()[0])
    parser.add_argument("--mode", choices=["heuristic", "echo"], default="heuristic")
    parser.add_argument("--kappa", type=float, default=0.02)
    parser.add_argument("--scores", type=parse_scores, default=[0.5],
                        help="fixed score vector for echo mode, comma separated")
    parser.add_argument("--latency-ms", type=float, default=0.0,
                        help="synthetic per-request inference latency")
    parser.add_argument("--port", type=int, default=None,
                        help="serve one TCP connection on this port instead of stdio")
    args = parser.parse_args(argv)
    if args.kappa <= 0:
        parser.error("--kappa must be > 0")

    server = Server(args.mode, args.kappa, args.scores, args.latency_ms)
    if args.port is None:
        return server.serve(sys.stdin.buffer, sys.stdout.buffer)

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as listener:
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(("127.0.0.1", args.port))
        listener.listen(1)
        # Report the bound port (useful with --port 0) before accepting.
        print(listener.getsockname()[1], file=sys.stderr, flush=True)
        conn, _ = listener.accept()
        with conn:
            rfile = conn.makefile("rb")
            wfile = conn.makefile("wb")
            return server.serve(rfile, wfile)


if __name__ == "__main__":
    sys.exit(main())
