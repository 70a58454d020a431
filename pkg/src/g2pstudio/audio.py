"""WAV I/O, peak measurement, normalization, silence trimming and spectrograms.

Mono-only processing: multi-channel input takes channel 0 with a warning.
PCM integer WAV at 16/24/32 bits; integer samples scale to [-1, 1] by
2^(depth-1), written back with round-half-away-from-zero and saturation.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyAudio, FormatError, IoError, NormalizeError

SUPPORTED_BIT_DEPTHS = (16, 24, 32)
SILENCE_FLOOR_DBFS = -120.0
SPECTROGRAM_EPS = 1e-10
RMS_FRAME_S = 0.010


@dataclass(frozen=True, eq=False)
class Waveform:
    """Float samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int
    source_bit_depth: int = 16

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.source_bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise ValueError(f"unsupported bit depth {self.source_bit_depth}")
        if samples.size and np.max(np.abs(samples)) > 1.0 + 1e-9:
            raise ValueError("samples must lie within [-1, 1]")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """STFT magnitude in dB: frames x bins, bins = window/2 + 1."""

    db: np.ndarray
    window_size: int
    hop: int
    sample_rate: int

    @property
    def frames(self) -> int:
        return self.db.shape[0]

    @property
    def bins(self) -> int:
        return self.window_size // 2 + 1

    def frame_times(self) -> np.ndarray:
        return (np.arange(self.frames) * self.hop + self.window_size / 2) / self.sample_rate

    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.bins) * self.sample_rate / self.window_size

    def to_dict(self) -> dict:
        return {
            "db": self.db.tolist(),
            "window_size": self.window_size,
            "hop": self.hop,
            "sample_rate": self.sample_rate,
            "frames": self.frames,
            "bins": self.bins,
        }


@dataclass(frozen=True)
class TrimResult:
    """Outcome of trim_silence; all_silent flags a fully-discarded input."""

    waveform: Waveform
    start_sample: int
    end_sample: int
    all_silent: bool = False


# --- RIFF/WAVE parsing ---

def decode_wav(data: bytes) -> Waveform:
    """Parse PCM WAV bytes (16/24/32-bit integer, first channel only)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise IoError("truncated fmt chunk")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            if len(body) < size:
                raise IoError("truncated data chunk")
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None or payload is None:
        raise FormatError("missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if audio_format != 1:  # WAVE_FORMAT_PCM
        raise FormatError(f"unsupported WAV format code {audio_format} (PCM only)")
    if bits not in SUPPORTED_BIT_DEPTHS:
        raise FormatError(f"unsupported bit depth {bits}")
    if channels < 1 or block_align != channels * bits // 8:
        raise FormatError("inconsistent channel/block-align fields")
    if channels > 1:
        warnings.warn(f"{channels}-channel input: keeping channel 0 only")

    frame_bytes = block_align
    n_frames = len(payload) // frame_bytes
    payload = payload[: n_frames * frame_bytes]
    if bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").reshape(n_frames, channels)[:, 0]
        ints = raw.astype(np.int64)
    elif bits == 32:
        raw = np.frombuffer(payload, dtype="<i4").reshape(n_frames, channels)[:, 0]
        ints = raw.astype(np.int64)
    else:  # 24-bit: assemble 3 little-endian bytes, sign-extend
        b = np.frombuffer(payload, dtype=np.uint8).reshape(n_frames, channels, 3)[:, 0, :]
        ints = (b[:, 0].astype(np.int64)
                | (b[:, 1].astype(np.int64) << 8)
                | (b[:, 2].astype(np.int64) << 16))
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
    samples = ints / float(1 << (bits - 1))
    return Waveform(samples=samples, sample_rate=rate, source_bit_depth=bits)


def read_wav(path: str | Path) -> Waveform:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    return decode_wav(data)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def encode_wav(waveform: Waveform, bit_depth: int | None = None) -> bytes:
    """Serialize to PCM WAV bytes, quantizing with round-half-away-from-zero."""
    bits = bit_depth or waveform.source_bit_depth
    if bits not in SUPPORTED_BIT_DEPTHS:
        raise FormatError(f"unsupported bit depth {bits}")
    full = 1 << (bits - 1)
    ints = _round_half_away(waveform.samples * full)
    ints = np.clip(ints, -full, full - 1).astype(np.int64)
    if bits == 16:
        payload = ints.astype("<i2").tobytes()
    elif bits == 32:
        payload = ints.astype("<i4").tobytes()
    else:
        u = (ints & 0xFFFFFF).astype(np.uint32)
        b = np.empty((len(ints), 3), dtype=np.uint8)
        b[:, 0] = u & 0xFF
        b[:, 1] = (u >> 8) & 0xFF
        b[:, 2] = (u >> 16) & 0xFF
        payload = b.tobytes()
    block_align = bits // 8
    byte_rate = waveform.sample_rate * block_align
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, waveform.sample_rate, byte_rate, block_align, bits,
        b"data", len(payload),
    )
    return header + payload


def write_wav(path: str | Path, waveform: Waveform,
              bit_depth: int | None = None) -> None:
    Path(path).write_bytes(encode_wav(waveform, bit_depth))


# --- level measurement and processing ---

def peak_level(waveform: Waveform) -> float:
    """Peak level in dBFS; digital silence reports the -120 dBFS floor."""
    if len(waveform) == 0:
        raise EmptyAudio("peak level of empty audio is undefined")
    peak = float(np.max(np.abs(waveform.samples)))
    if peak == 0.0:
        return SILENCE_FLOOR_DBFS
    return max(20.0 * np.log10(peak), SILENCE_FLOOR_DBFS)


def peak_normalize(waveform: Waveform, target_dbfs: float = -3.0) -> Waveform:
    """Uniform gain so the peak hits target_dbfs; clipping impossible since
    target <= 0 implies a linear target <= 1."""
    if target_dbfs > 0:
        raise ValueError(f"target_dbfs must be <= 0, got {target_dbfs}")
    if len(waveform) == 0:
        raise EmptyAudio("cannot normalize empty audio")
    peak = float(np.max(np.abs(waveform.samples)))
    if peak == 0.0:
        raise NormalizeError("cannot normalize an all-zero waveform")
    gain = 10.0 ** (target_dbfs / 20.0) / peak
    return Waveform(samples=waveform.samples * gain,
                    sample_rate=waveform.sample_rate,
                    source_bit_depth=waveform.source_bit_depth)


def trim_silence(waveform: Waveform, threshold_dbfs: float = -40.0,
                 guard_ms: float = 100.0) -> TrimResult:
    """Trim leading/trailing regions whose 10 ms RMS stays below threshold.

    A guard margin (rounded up to whole frames so a second trim is a no-op)
    is retained before the first and after the last loud frame. Interior
    samples are never touched. Fully silent input yields an empty waveform,
    flagged all_silent rather than raised.
    """
    if threshold_dbfs >= 0:
        raise ValueError("threshold_dbfs must be negative")
    if guard_ms < 0:
        raise ValueError("guard_ms must be >= 0")
    n = len(waveform)
    if n == 0:
        return TrimResult(waveform=waveform, start_sample=0, end_sample=0,
                          all_silent=True)
    frame = max(1, int(round(waveform.sample_rate * RMS_FRAME_S)))
    n_frames = (n + frame - 1) // frame
    threshold_lin = 10.0 ** (threshold_dbfs / 20.0)
    loud = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        seg = waveform.samples[i * frame:(i + 1) * frame]
        rms = float(np.sqrt(np.mean(seg * seg)))
        loud[i] = rms >= threshold_lin
    if not loud.any():
        empty = Waveform(samples=np.empty(0), sample_rate=waveform.sample_rate,
                         source_bit_depth=waveform.source_bit_depth)
        return TrimResult(waveform=empty, start_sample=0, end_sample=0,
                          all_silent=True)
    guard_frames = int(np.ceil(guard_ms / (RMS_FRAME_S * 1000.0)))
    first = int(np.argmax(loud))
    last = int(len(loud) - 1 - np.argmax(loud[::-1]))
    start = max(0, (first - guard_frames) * frame)
    end = min(n, (last + 1 + guard_frames) * frame)
    out = Waveform(samples=waveform.samples[start:end].copy(),
                   sample_rate=waveform.sample_rate,
                   source_bit_depth=waveform.source_bit_depth)
    return TrimResult(waveform=out, start_sample=start, end_sample=end)


def compute_spectrogram(waveform: Waveform, window_size: int = 512,
                        hop: int | None = None) -> Spectrogram:
    """Hann-windowed STFT magnitude in dB (20*log10(|X| + eps)).

    Audio shorter than one window yields a 0-frame spectrogram.
    """
    if window_size < 2 or window_size & (window_size - 1):
        raise ValueError(f"window_size must be a power of two, got {window_size}")
    if hop is None:
        hop = window_size // 4
    if not 0 < hop <= window_size:
        raise ValueError(f"hop must be in (0, window], got {hop}")
    n = len(waveform)
    bins = window_size // 2 + 1
    if n < window_size:
        return Spectrogram(db=np.zeros((0, bins)), window_size=window_size,
                           hop=hop, sample_rate=waveform.sample_rate)
    frames = (n - window_size) // hop + 1
    window = np.hanning(window_size)
    idx = np.arange(window_size)[None, :] + hop * np.arange(frames)[:, None]
    segments = waveform.samples[idx] * window
    mags = np.abs(np.fft.rfft(segments, axis=1))
    db = 20.0 * np.log10(mags + SPECTROGRAM_EPS)
    return Spectrogram(db=db, window_size=window_size, hop=hop,
                       sample_rate=waveform.sample_rate)
