"""Shared domain types. No I/O, no policy.

Frames, windows, scores and detection results are immutable values and
safe to hand between pipeline stages; scheduler state lives in
:class:`StreamState`, which has a single writer by contract.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SOURCE_VIDEO = "video"
SOURCE_AUDIO = "audio"
SOURCE_FUSED = "fused"
_SOURCES = (SOURCE_VIDEO, SOURCE_AUDIO, SOURCE_FUSED)

DEFAULT_WINDOW_LENGTH = 20

_TOKEN = re.compile(r"\S+\Z")


def validate_stream_id(stream_id: str) -> str:
    """Check that a stream id is a nonempty token without whitespace."""
    if not isinstance(stream_id, str) or _TOKEN.match(stream_id) is None:
        raise ValueError(f"stream id must be a nonempty token without whitespace: {stream_id!r}")
    return stream_id


@dataclass(frozen=True)
class Frame:
    """Single grayscale frame: row-major 8-bit intensities plus a sequence number."""

    width: int
    height: int
    pixels: bytes
    index: int = 0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dimensions must be >= 1, got {self.width}x{self.height}")
        if self.index < 0:
            raise ValueError(f"frame index must be >= 0, got {self.index}")
        if not isinstance(self.pixels, bytes):
            object.__setattr__(self, "pixels", bytes(self.pixels))
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixel count {len(self.pixels)} != width*height {self.width * self.height}"
            )

    def as_array(self) -> np.ndarray:
        """View the pixels as an (height, width) uint8 array."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width)

    @classmethod
    def from_array(cls, arr: np.ndarray, index: int = 0) -> "Frame":
        a = np.asarray(arr, dtype=np.uint8)
        if a.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {a.shape}")
        return cls(width=a.shape[1], height=a.shape[0], pixels=a.tobytes(), index=index)

    def at(self, x: int, y: int) -> int:
        return self.pixels[y * self.width + x]


def _check_window_frames(frames: tuple, minimum: int, what: str) -> None:
    if len(frames) < minimum:
        raise ValueError(f"{what} needs at least {minimum} frames, got {len(frames)}")
    w, h = frames[0].width, frames[0].height
    for f in frames:
        if f.width != w or f.height != h:
            raise ValueError(
                f"{what} frames must share dimensions: {w}x{h} vs {f.width}x{f.height}"
            )


@dataclass(frozen=True)
class FrameWindow:
    """L+1 consecutive same-sized frames from one stream (L adjacent pairs)."""

    stream: str
    frames: tuple

    def __post_init__(self) -> None:
        validate_stream_id(self.stream)
        object.__setattr__(self, "frames", tuple(self.frames))
        _check_window_frames(self.frames, 2, "FrameWindow")
        for prev, cur in zip(self.frames, self.frames[1:]):
            if cur.index != prev.index + 1:
                raise ValueError(
                    f"frame indices must be consecutive, got {prev.index} then {cur.index}"
                )

    @property
    def length(self) -> int:
        """Number of adjacent pairs (L); the window holds L+1 frames."""
        return len(self.frames) - 1

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height


@dataclass(frozen=True)
class DiffWindow:
    """L pixel-wise absolute-difference frames from one stream."""

    stream: str
    diffs: tuple

    def __post_init__(self) -> None:
        validate_stream_id(self.stream)
        object.__setattr__(self, "diffs", tuple(self.diffs))
        _check_window_frames(self.diffs, 1, "DiffWindow")

    @property
    def length(self) -> int:
        return len(self.diffs)

    @property
    def width(self) -> int:
        return self.diffs[0].width

    @property
    def height(self) -> int:
        return self.diffs[0].height

    def payload(self) -> bytes:
        """Raw window-major, row-major bytes of all diff frames."""
        return b"".join(d.pixels for d in self.diffs)


@dataclass(frozen=True)
class ScoreVector:
    """Nonempty vector of detector scores, each in [0, 1]."""

    scores: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if not self.scores:
            raise ValueError("ScoreVector must be nonempty")
        for s in self.scores:
            if not (0.0 <= s <= 1.0) or not math.isfinite(s):
                raise ValueError(f"score out of [0, 1]: {s!r}")

    def total(self) -> float:
        return float(sum(self.scores))

    def mean(self) -> float:
        return self.total() / len(self.scores)

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class DetectionResult:
    """Outcome of one inference over one window."""

    stream: str
    cycle: int
    scores: ScoreVector
    detected: bool
    source: str = SOURCE_VIDEO

    def __post_init__(self) -> None:
        validate_stream_id(self.stream)
        if self.cycle < 0:
            raise ValueError(f"cycle must be >= 0, got {self.cycle}")
        if self.source not in _SOURCES:
            raise ValueError(f"source must be one of {_SOURCES}, got {self.source!r}")


@dataclass
class StreamState:
    """Per-stream scheduler state. Mutated only by the scheduling agent.

    ``p`` is the priority probability, ``c`` the confidence coefficient,
    ``wait`` the cycles since the stream was last granted inference.
    """

    stream: str
    p: float
    c: float = 0.0
    last_serviced: Optional[int] = None
    wait: int = 0


@dataclass(frozen=True)
class SchedulerConfig:
    """Knobs for the priority scheduler and decision thresholding.

    ``w_max`` may be ``math.inf`` to disable the hard service guarantee
    (together with ``aging_alpha=0`` this recovers the bare top-B rule).
    """

    n_streams: int
    budget: int
    tau: int = 1
    p_floor: float = 0.0
    aging_alpha: float = 0.01
    w_max: float = 200
    threshold: float = 0.5
    queue_cost: float = 1.0

    def __post_init__(self) -> None:
        if self.n_streams < 1:
            raise ValueError(f"n_streams must be >= 1, got {self.n_streams}")
        if not (1 <= self.budget <= self.n_streams):
            raise ValueError(
                f"budget must be in [1, n_streams={self.n_streams}], got {self.budget}"
            )
        if self.tau < 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not (0.0 <= self.p_floor < 1.0):
            raise ValueError(f"p_floor must be in [0, 1), got {self.p_floor}")
        if self.aging_alpha < 0.0:
            raise ValueError(f"aging_alpha must be >= 0, got {self.aging_alpha}")
        if not (self.w_max >= 1):
            raise ValueError(f"w_max must be >= 1 (or inf), got {self.w_max}")
        if not (0.0 < self.threshold < 1.0):
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.queue_cost < 0.0:
            raise ValueError(f"queue_cost must be >= 0, got {self.queue_cost}")


@dataclass(frozen=True)
class EventTimeline:
    """Per-stream sorted, non-overlapping half-open violent intervals [start, end)."""

    intervals: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        cleaned = {}
        for stream, ivs in self.intervals.items():
            validate_stream_id(stream)
            ivs = tuple((int(a), int(b)) for a, b in ivs)
            prev_end = None
            for a, b in ivs:
                if a < 0 or a >= b:
                    raise ValueError(f"bad interval [{a}, {b}) for stream {stream}")
                if prev_end is not None and a < prev_end:
                    raise ValueError(f"overlapping or unsorted intervals for stream {stream}")
                prev_end = b
            cleaned[stream] = ivs
        object.__setattr__(self, "intervals", cleaned)

    def streams(self) -> list:
        return sorted(self.intervals)

    def events(self, stream: str) -> tuple:
        return self.intervals.get(stream, ())

    def total_events(self) -> int:
        return sum(len(v) for v in self.intervals.values())

    def is_violent(self, stream: str, cycle: int) -> bool:
        for a, b in self.intervals.get(stream, ()):
            if a <= cycle < b:
                return True
            if a > cycle:
                break
        return False

    def truth_array(self, stream: str, cycles: int) -> np.ndarray:
        """Dense per-cycle truth flags for one stream over [0, cycles)."""
        arr = np.zeros(cycles, dtype=bool)
        for a, b in self.intervals.get(stream, ()):
            arr[max(a, 0):min(b, cycles)] = True
        return arr
