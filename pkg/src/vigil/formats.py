"""Binary ingestion formats: 8-bit binary PGM frames and 16-bit mono PCM WAV.

Both formats were chosen because test fixtures can be built by hand as
byte strings; each failure mode raises its own exception type.
"""

from __future__ import annotations

import struct

from .core import Frame
from .audio import AudioClip

import numpy as np

MAX_PGM_DIM = 1 << 16


class PgmError(ValueError):
    """Base for PGM parse failures."""


class PgmMagicError(PgmError):
    """File does not start with the binary PGM magic 'P5'."""


class PgmMaxvalError(PgmError):
    """Declared maxval is not 255."""


class PgmTruncatedError(PgmError):
    """Payload shorter than width * height."""


class PgmDimsError(PgmError):
    """Missing, non-positive or oversized dimensions."""


class WavError(ValueError):
    """Base for WAV parse failures."""


class WavRiffError(WavError):
    """Not a RIFF/WAVE container."""


class WavFormatCodeError(WavError):
    """Format code is not integer PCM (1)."""


class WavChannelsError(WavError):
    """Channel count is not 1."""


class WavBitDepthError(WavError):
    """Sample width is not 16 bits."""


class WavDataChunkError(WavError):
    """No data chunk, or chunks are malformed."""


def _parse_pgm_header(data: bytes):
    """Read magic, width, height, maxval; returns them plus the payload offset.

    Header tokens are separated by whitespace; '#' starts a comment that
    runs to end of line. Exactly one whitespace byte follows maxval.
    """
    if data[:2] != b"P5":
        raise PgmMagicError(f"bad magic {data[:2]!r}, expected b'P5'")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmDimsError("header ended before width, height and maxval were read")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PgmDimsError(f"non-numeric header token in {tokens!r}") from exc
    return width, height, maxval, pos


def parse_pgm(data: bytes) -> Frame:
    """Decode one binary PGM (P5, maxval 255) image."""
    width, height, maxval, offset = _parse_pgm_header(data)
    if maxval != 255:
        raise PgmMaxvalError(f"maxval must be 255, got {maxval}")
    if width < 1 or height < 1:
        raise PgmDimsError(f"dimensions must be >= 1, got {width}x{height}")
    if width > MAX_PGM_DIM or height > MAX_PGM_DIM:
        raise PgmDimsError(f"dimensions exceed {MAX_PGM_DIM}: {width}x{height}")
    payload = data[offset:offset + width * height]
    if len(payload) < width * height:
        raise PgmTruncatedError(
            f"payload has {len(payload)} bytes, needs {width * height}"
        )
    return Frame(width=width, height=height, pixels=bytes(payload))


def read_pgm(path) -> Frame:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def pgm_bytes(frame: Frame) -> bytes:
    return b"P5\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels


def write_pgm(path, frame: Frame) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(frame))


def parse_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE file holding 16-bit mono integer PCM.

    Samples map to [-1, 1) as s / 32768. Chunks other than fmt and data
    are skipped (with odd-size padding per RIFF).
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavRiffError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavDataChunkError("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavDataChunkError("missing fmt chunk")
    format_code, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if format_code != 1:
        raise WavFormatCodeError(f"format code must be 1 (integer PCM), got {format_code}")
    if channels != 1:
        raise WavChannelsError(f"need mono audio, got {channels} channels")
    if bits != 16:
        raise WavBitDepthError(f"need 16-bit samples, got {bits}")
    if payload is None:
        raise WavDataChunkError("missing data chunk")
    samples = np.frombuffer(payload[:len(payload) // 2 * 2], dtype="<i2")
    return AudioClip(samples=samples.astype(np.float64) / 32768.0, sample_rate=sample_rate)


def read_wav(path) -> AudioClip:
    with open(path, "rb") as fh:
        return parse_wav(fh.read())


def wav_bytes(samples_i16, sample_rate: int) -> bytes:
    """Assemble a minimal 16-bit mono PCM WAV from integer samples."""
    arr = np.asarray(samples_i16, dtype="<i2")
    payload = arr.tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, sample_rate, sample_rate * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body
