"""Log-mel spectrogram extraction.

Framing is locked to the labeling grid: hop 2205 samples (0.05 s at
44.1 kHz), window 2048 with reflection-padded centered frames, so a
441000-sample segment yields exactly 200 spectrogram columns, one per
label frame. 128 triangular mel filters span 0 Hz to Nyquist.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip
from .errors import DataError, InputError

N_MELS = 128
FFT_SIZE = 2048
HOP = 2205
LOG_EPS = 1e-10
STD_FLOOR = 1e-6

_MELF_MAGIC = b"MELF"
_MELF_VERSION = 1


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-compressed mel energies, shaped (n_mels, n_frames)."""

    values: np.ndarray
    frame_hop: int = HOP
    fft_size: int = FFT_SIZE

    @property
    def n_mels(self) -> int:
        return self.values.shape[0]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureStats:
    """Per-mel-bin normalization statistics from the training set."""

    mean: np.ndarray
    std: np.ndarray


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def num_frames(num_samples: int, hop: int = HOP) -> int:
    """Spectrogram/label frame count for a sample count: ceil(n / hop)."""
    return -(-num_samples // hop)


def power_spectrogram(clip: AudioClip, fft_size: int = FFT_SIZE, hop: int = HOP) -> np.ndarray:
    """Hann-windowed magnitude-squared STFT, shaped (fft_size/2+1, n_frames).

    Frame t is centered at sample t*hop; the signal is reflection-padded
    by fft_size/2 at both ends so every frame center lies inside it.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size == 0:
        raise DataError("cannot compute a spectrogram of an empty clip")
    half = fft_size // 2
    if x.size < half + 1:
        raise DataError(f"clip too short for reflection padding: {x.size} < {half + 1} samples")

    n_frames = num_frames(x.size, hop)
    padded = np.pad(x, half, mode="reflect")
    starts = np.arange(n_frames) * hop
    frames = padded[starts[:, None] + np.arange(fft_size)[None, :]]
    window = np.hanning(fft_size)
    spectrum = np.fft.rfft(frames * window, axis=1)
    return np.abs(spectrum).T ** 2


def mel_filterbank(
    n_mels: int = N_MELS,
    fft_size: int = FFT_SIZE,
    sample_rate: int = 44100,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filters, shaped (n_mels, fft_size/2+1).

    Filter centers are equally spaced on the mel scale
    mel(f) = 2595*log10(1 + f/700) between fmin and fmax.
    """
    if fmax is None:
        fmax = sample_rate / 2
    if not 0 <= fmin < fmax <= sample_rate / 2:
        raise InputError(f"invalid mel frequency range [{fmin}, {fmax}] for sr={sample_rate}")

    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)

    left, center, right = hz_pts[:-2, None], hz_pts[1:-1, None], hz_pts[2:, None]
    up = (bin_hz - left) / (center - left)
    down = (right - bin_hz) / (right - center)
    return np.maximum(0.0, np.minimum(up, down))


def mel_spectrogram(clip: AudioClip, filterbank: np.ndarray | None = None) -> MelSpectrogram:
    """Log mel spectrogram: log(filterbank @ power_spectrogram + 1e-10)."""
    if filterbank is None:
        filterbank = mel_filterbank()
    power = power_spectrogram(clip)
    if filterbank.shape[1] != power.shape[0]:
        raise DataError(
            f"filterbank has {filterbank.shape[1]} bins, spectrogram has {power.shape[0]}"
        )
    return MelSpectrogram(values=np.log(filterbank @ power + LOG_EPS))


def compute_stats(melspecs) -> FeatureStats:
    """Per-bin mean/std across all frames of all given spectrograms."""
    stacked = np.concatenate([m.values for m in melspecs], axis=1)
    return FeatureStats(mean=stacked.mean(axis=1), std=stacked.std(axis=1))


def normalize(melspec: MelSpectrogram, stats: FeatureStats) -> MelSpectrogram:
    """Z-normalize each mel bin; the std divisor is floored at 1e-6."""
    if stats.mean.shape[0] != melspec.n_mels or stats.std.shape[0] != melspec.n_mels:
        raise DataError(
            f"stats cover {stats.mean.shape[0]} bins, spectrogram has {melspec.n_mels}"
        )
    std = np.maximum(stats.std, STD_FLOOR)
    values = (melspec.values - stats.mean[:, None]) / std[:, None]
    return MelSpectrogram(values=values, frame_hop=melspec.frame_hop, fft_size=melspec.fft_size)


def write_melspec(path: str | Path, melspec: MelSpectrogram) -> None:
    """Dump as little-endian float32, row-major, behind a 16-byte header."""
    header = struct.pack("<4sIII", _MELF_MAGIC, _MELF_VERSION, melspec.n_mels, melspec.n_frames)
    Path(path).write_bytes(header + melspec.values.astype("<f4").tobytes())


def read_melspec(path: str | Path) -> MelSpectrogram:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _MELF_MAGIC:
        raise DataError(f"{path}: not a MELF feature dump")
    _, version, n_mels, n_frames = struct.unpack_from("<4sIII", data, 0)
    if version != _MELF_VERSION:
        raise DataError(f"{path}: unsupported MELF version {version}")
    expected = 16 + 4 * n_mels * n_frames
    if len(data) < expected:
        raise DataError(f"{path}: truncated MELF payload")
    values = np.frombuffer(data, dtype="<f4", count=n_mels * n_frames, offset=16)
    return MelSpectrogram(values=values.reshape(n_mels, n_frames).astype(np.float64))
