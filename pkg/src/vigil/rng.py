"""Counter-based deterministic randomness.

Every random decision in the simulator is addressed by
(seed, purpose, stream, index). Draws come from a numpy Philox stream
whose 128-bit key is derived from (seed, purpose, stream); the index is
the position in that stream. Philox is a pure counter block cipher, so
a draw depends only on its address: adding streams, changing policies
or reordering work never perturbs anyone else's values, and results are
identical across platforms and processes.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_TWO64 = 2.0 ** 64


def philox_key(seed: int, purpose: str, stream: str = "") -> list:
    """Derive the 2x64-bit Philox key for one (seed, purpose, stream) address."""
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    h.update(purpose.encode("utf-8"))
    h.update(b"\x00")
    h.update(stream.encode("utf-8"))
    return list(struct.unpack("<QQ", h.digest()))


def raw_stream(seed: int, purpose: str, stream: str, n: int) -> np.ndarray:
    """First n raw 64-bit values of the addressed stream."""
    bg = np.random.Philox(key=philox_key(seed, purpose, stream))
    return bg.random_raw(n)


def uniforms(seed: int, purpose: str, stream: str, n: int) -> np.ndarray:
    """First n uniform [0, 1) doubles of the addressed stream."""
    return raw_stream(seed, purpose, stream, n) / _TWO64


def uniform_at(seed: int, purpose: str, stream: str, index: int) -> float:
    """Single uniform draw at a stream position; equals uniforms(...)[index]."""
    return float(uniforms(seed, purpose, stream, index + 1)[index])


def byte_stream(seed: int, purpose: str, stream: str, n: int) -> np.ndarray:
    """First n pseudo-random bytes of the addressed stream as uint8."""
    words = raw_stream(seed, purpose, stream, (n + 7) // 8)
    return words.view(np.uint8)[:n].copy()
