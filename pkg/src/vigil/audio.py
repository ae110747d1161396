"""Audio feature extraction (ZCR, energy, loudness, STFT, mel, MFCC,
chroma) and fuzzy min-max fusion of video and audio scores.

Conventions are fixed so golden values stay stable: periodic Hann
window, HTK mel scale (2595 / 700), peak-1 triangular mel filters,
orthonormal DCT-II, log floors 1e-10 (mel) and 1e-12 (loudness).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KIND_MAGNITUDE = "magnitude"
KIND_POWER = "power"
KIND_MEL = "mel"
KIND_LOG_MEL = "log_mel"

MEL_LOG_FLOOR = 1e-10
LOUDNESS_FLOOR = 1e-12
CHROMA_MIN_HZ = 20.0


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples must be finite")
        if np.any(arr < -1.0) or np.any(arr > 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return int(self.samples.size)


@dataclass(frozen=True)
class Spectrogram:
    """Time-major rows of spectral values plus the framing parameters."""

    frames: np.ndarray
    n_fft: int
    hop: int
    kind: str
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"frames must be 2-D (time, bins), got shape {arr.shape}")
        if self.kind not in (KIND_MAGNITUDE, KIND_POWER, KIND_MEL, KIND_LOG_MEL):
            raise ValueError(f"unknown spectrogram kind {self.kind!r}")
        if self.kind != KIND_LOG_MEL and arr.size and arr.min() < 0:
            raise ValueError(f"{self.kind} spectrogram must be nonnegative")
        object.__setattr__(self, "frames", arr)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    def bin_frequencies(self) -> np.ndarray:
        """Center frequency in Hz of each FFT bin row position."""
        return np.arange(self.frames.shape[1]) * (self.sample_rate / self.n_fft)


def zcr(clip: AudioClip) -> float:
    """Fraction of adjacent sample pairs with strictly opposite sign."""
    x = clip.samples
    if x.size < 2:
        raise ValueError("zcr needs at least 2 samples")
    crossings = int(np.count_nonzero(x[1:] * x[:-1] < 0))
    return crossings / (x.size - 1)


def energy(clip: AudioClip) -> float:
    """Mean squared amplitude."""
    x = clip.samples
    return float(np.mean(x * x))


def loudness_db(clip: AudioClip) -> float:
    """20 * log10(rms + 1e-12); the floor keeps silence finite (-240 dB)."""
    rms = math.sqrt(energy(clip))
    return 20.0 * math.log10(rms + LOUDNESS_FLOOR)


def hann_window(n_fft: int) -> np.ndarray:
    """Periodic Hann: w[n] = 0.5 * (1 - cos(2 pi n / n_fft))."""
    n = np.arange(n_fft)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / n_fft))


def stft(clip: AudioClip, n_fft: int, hop: int) -> Spectrogram:
    """Magnitudes of the first n_fft/2 + 1 bins of Hann-windowed segments.

    Frames start at offsets 0, hop, 2*hop, ... for as long as a full
    n_fft window fits; clips shorter than one window are rejected.
    """
    if n_fft < 8 or (n_fft & (n_fft - 1)) != 0:
        raise ValueError(f"n_fft must be a power of two >= 8, got {n_fft}")
    if not (1 <= hop <= n_fft):
        raise ValueError(f"hop must be in [1, n_fft], got {hop}")
    x = clip.samples
    if x.size < n_fft:
        raise ValueError(f"clip of {x.size} samples is shorter than n_fft={n_fft}")
    n_frames = (x.size - n_fft) // hop + 1
    window = hann_window(n_fft)
    offsets = np.arange(n_frames) * hop
    segments = x[offsets[:, None] + np.arange(n_fft)] * window
    mags = np.abs(np.fft.rfft(segments, axis=1))
    return Spectrogram(frames=mags, n_fft=n_fft, hop=hop,
                       kind=KIND_MAGNITUDE, sample_rate=clip.sample_rate)


def power_spectrogram(spec: Spectrogram) -> Spectrogram:
    if spec.kind != KIND_MAGNITUDE:
        raise ValueError(f"expected a magnitude spectrogram, got {spec.kind}")
    return Spectrogram(frames=spec.frames ** 2, n_fft=spec.n_fft, hop=spec.hop,
                       kind=KIND_POWER, sample_rate=spec.sample_rate)


def hz_to_mel(f: float) -> float:
    """HTK convention: mel = 2595 * log10(1 + f / 700)."""
    if f < 0:
        raise ValueError(f"frequency must be >= 0, got {f}")
    return 2595.0 * math.log10(1.0 + f / 700.0)


def mel_to_hz(m: float) -> float:
    if m < 0:
        raise ValueError(f"mel value must be >= 0, got {m}")
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_bins: int, n_fft: int, sample_rate: int,
                   f_min: float, f_max: float) -> np.ndarray:
    """(n_mels, n_bins) triangular filters, peak weight exactly 1.

    Filter j rises from edge j to center j+1 and falls to edge j+2,
    where the n_mels + 2 edge points are equally spaced on the mel
    scale between f_min and f_max; weights are interpolated in Hz.
    """
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if not (0 <= f_min < f_max <= sample_rate / 2):
        raise ValueError(
            f"need 0 <= f_min < f_max <= nyquist, got f_min={f_min}, f_max={f_max}, "
            f"nyquist={sample_rate / 2}"
        )
    mel_edges = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_edges = np.array([mel_to_hz(m) for m in mel_edges])
    freqs = np.arange(n_bins) * (sample_rate / n_fft)
    bank = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        lo, center, hi = hz_edges[j], hz_edges[j + 1], hz_edges[j + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def mel_spectrogram(spec: Spectrogram, n_mels: int,
                    f_min: float = 0.0, f_max: float | None = None) -> Spectrogram:
    """Apply the triangular filterbank to a power spectrogram."""
    if spec.kind != KIND_POWER:
        raise ValueError(f"expected a power spectrogram, got {spec.kind}")
    if f_max is None:
        f_max = spec.sample_rate / 2
    bank = mel_filterbank(n_mels, spec.frames.shape[1], spec.n_fft,
                          spec.sample_rate, f_min, f_max)
    return Spectrogram(frames=spec.frames @ bank.T, n_fft=spec.n_fft, hop=spec.hop,
                       kind=KIND_MEL, sample_rate=spec.sample_rate)


def log_mel_spectrogram(spec: Spectrogram) -> Spectrogram:
    """ln(mel + 1e-10), elementwise."""
    if spec.kind != KIND_MEL:
        raise ValueError(f"expected a mel spectrogram, got {spec.kind}")
    return Spectrogram(frames=np.log(spec.frames + MEL_LOG_FLOOR), n_fft=spec.n_fft,
                       hop=spec.hop, kind=KIND_LOG_MEL, sample_rate=spec.sample_rate)


def _dct_ii_orthonormal(n: int) -> np.ndarray:
    # C[k, m] = scale_k * cos(pi * k * (2m + 1) / (2n))
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * m + 1) / (2 * n)) * math.sqrt(2.0 / n)
    mat[0] /= math.sqrt(2.0)
    return mat


def mfcc(log_mel: Spectrogram, n_mfcc: int = 13) -> np.ndarray:
    """First n_mfcc coefficients of the orthonormal DCT-II of each log-mel row."""
    if log_mel.kind != KIND_LOG_MEL:
        raise ValueError(f"expected a log-mel spectrogram, got {log_mel.kind}")
    n_mels = log_mel.frames.shape[1]
    if not (1 <= n_mfcc <= n_mels):
        raise ValueError(f"n_mfcc must be in [1, n_mels={n_mels}], got {n_mfcc}")
    dct = _dct_ii_orthonormal(n_mels)
    return log_mel.frames @ dct[:n_mfcc].T


def pitch_class(freq_hz: float) -> int:
    """Semitone class relative to A440, shifted so class 0 is C."""
    semitones = 12.0 * math.log2(freq_hz / 440.0)
    return (int(math.floor(semitones + 0.5)) + 9) % 12


def chroma(spec: Spectrogram) -> np.ndarray:
    """Fold magnitude bins into 12 pitch classes; bins below 20 Hz are dropped."""
    if spec.kind != KIND_MAGNITUDE:
        raise ValueError(f"expected a magnitude spectrogram, got {spec.kind}")
    freqs = spec.bin_frequencies()
    out = np.zeros((spec.n_frames, 12))
    for b, f in enumerate(freqs):
        if f < CHROMA_MIN_HZ:
            continue
        out[:, pitch_class(float(f))] += spec.frames[:, b]
    return out


def fuse_minmax(video: float, audio: float, w_video: float = 1.0, w_audio: float = 1.0) -> float:
    """Fuzzy composition max(min(video, w_video), min(audio, w_audio)).

    Pure min/max, no arithmetic, so results carry no floating error.
    """
    for name, v in (("video", video), ("audio", audio),
                    ("w_video", w_video), ("w_audio", w_audio)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} must be in [0, 1], got {v!r}")
    return max(min(video, w_video), min(audio, w_audio))
