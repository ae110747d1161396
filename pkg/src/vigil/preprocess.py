"""Frame preprocessing: border removal, adjacent-frame differencing,
crop/transpose augmentation, and the motion-energy summary.

All operations are pure functions over immutable frames and are safe to
run data-parallel across windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiffWindow, Frame, FrameWindow

DEFAULT_DARK_THRESHOLD = 10

# Squared full-scale intensity; motion energy divides an exact integer
# sum of squared diffs by pixel_count * 255^2 in one final division so
# independent implementations can reproduce it bitwise.
_FULL_SCALE_SQ = 255 * 255


@dataclass(frozen=True)
class ContentRect:
    """Axis-aligned content region inside a frame (dark borders removed)."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self) -> None:
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"rect origin must be >= 0, got ({self.x0}, {self.y0})")
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect extents must be >= 1, got {self.w}x{self.h}")

    def fits(self, frame: Frame) -> bool:
        return self.x0 + self.w <= frame.width and self.y0 + self.h <= frame.height

    def transposed(self) -> "ContentRect":
        return ContentRect(x0=self.y0, y0=self.x0, w=self.h, h=self.w)


def full_rect(frame: Frame) -> ContentRect:
    return ContentRect(x0=0, y0=0, w=frame.width, h=frame.height)


def remove_borders(frame: Frame, dark_threshold: int = DEFAULT_DARK_THRESHOLD) -> ContentRect:
    """Smallest rect covering every row and column brighter than the threshold.

    A row or column counts as content when its maximum intensity exceeds
    ``dark_threshold``. An entirely dark frame falls back to the full
    frame rect rather than failing.
    """
    if not (0 <= dark_threshold <= 255):
        raise ValueError(f"dark_threshold must be in [0, 255], got {dark_threshold}")
    arr = frame.as_array()
    rows = np.flatnonzero(arr.max(axis=1) > dark_threshold)
    cols = np.flatnonzero(arr.max(axis=0) > dark_threshold)
    if rows.size == 0 or cols.size == 0:
        return full_rect(frame)
    return ContentRect(
        x0=int(cols[0]),
        y0=int(rows[0]),
        w=int(cols[-1] - cols[0] + 1),
        h=int(rows[-1] - rows[0] + 1),
    )


def crop(frame: Frame, rect: ContentRect) -> Frame:
    """Cut the rect out of the frame; the frame index is preserved."""
    if not rect.fits(frame):
        raise ValueError(
            f"rect {rect} exceeds frame bounds {frame.width}x{frame.height}"
        )
    arr = frame.as_array()[rect.y0:rect.y0 + rect.h, rect.x0:rect.x0 + rect.w]
    return Frame.from_array(arr, index=frame.index)


def transpose(frame: Frame) -> Frame:
    """Swap axes: output (x, y) reads input (y, x)."""
    return Frame.from_array(frame.as_array().T, index=frame.index)


def crop_window(window: FrameWindow, rect: ContentRect) -> FrameWindow:
    """Apply one rect to every frame of a window (borders are per-video)."""
    return FrameWindow(stream=window.stream, frames=tuple(crop(f, rect) for f in window.frames))


def diff_window(window: FrameWindow) -> DiffWindow:
    """Pixel-wise absolute differences of adjacent frames; L+1 frames in, L out.

    Each diff frame keeps the index of the earlier frame of its pair.
    """
    diffs = []
    prev = window.frames[0].as_array().astype(np.int16)
    for cur_frame in window.frames[1:]:
        cur = cur_frame.as_array().astype(np.int16)
        d = np.abs(cur - prev).astype(np.uint8)
        diffs.append(Frame.from_array(d, index=cur_frame.index - 1))
        prev = cur
    return DiffWindow(stream=window.stream, diffs=tuple(diffs))


def motion_energy(dw: DiffWindow) -> float:
    """Mean over all diff pixels of (pixel / 255)^2, in [0, 1].

    Accumulates the integer sum of squared pixels first and divides once,
    so the value is reproducible bit-for-bit by other implementations.
    """
    total = 0
    count = 0
    for d in dw.diffs:
        arr = np.frombuffer(d.pixels, dtype=np.uint8).astype(np.uint64)
        total += int((arr * arr).sum())
        count += arr.size
    return total / (count * _FULL_SCALE_SQ)
