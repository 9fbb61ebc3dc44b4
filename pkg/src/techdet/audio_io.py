"""Mono 44.1 kHz WAV reading and writing.

The only module that touches audio files. Reads RIFF/WAVE containers with
16-bit integer PCM or 32-bit IEEE float payloads, 1 or 2 channels; writes
canonical 16-bit PCM mono. No resampling: anything not at 44.1 kHz is
rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError

SAMPLE_RATE = 44100

_PCM = 1
_IEEE_FLOAT = 3
_INT16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """Immutable mono audio: float64 samples in [-1, 1] plus sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


def _read_chunks(data: bytes, path):
    """Yield (chunk id, payload) for every top-level RIFF chunk."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        pos += 8
        if pos + size > len(data):
            raise AudioFormatError(f"{path}: truncated {cid.decode('latin1')!r} chunk")
        yield cid, data[pos : pos + size]
        pos += size + (size & 1)  # chunks are word-aligned


def read_wav(path: str | Path) -> AudioClip:
    """Read a WAV file as a mono clip with samples scaled to [-1, 1].

    Accepts 16-bit PCM and 32-bit IEEE float, mono or stereo, at 44.1 kHz.
    Stereo is collapsed to the arithmetic mean of the channels; integer
    samples are scaled by 1/32768.

    Raises:
        AudioFormatError: malformed container, unsupported encoding,
            channel count, bit depth, or sample rate.
    """
    path = Path(path)
    data = path.read_bytes()

    fmt = None
    payload = None
    for cid, body in _read_chunks(data, path):
        if cid == b"fmt " and fmt is None:
            if len(body) < 16:
                raise AudioFormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data" and payload is None:
            payload = body
    if fmt is None:
        raise AudioFormatError(f"{path}: missing fmt chunk")
    if payload is None:
        raise AudioFormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if audio_format not in (_PCM, _IEEE_FLOAT):
        raise AudioFormatError(f"{path}: unsupported encoding (format tag {audio_format})")
    if channels not in (1, 2):
        raise AudioFormatError(f"{path}: unsupported channel count {channels}")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE} Hz")

    if audio_format == _PCM:
        if bits != 16:
            raise AudioFormatError(f"{path}: unsupported PCM bit depth {bits}")
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (2 * channels)], dtype="<i2")
        samples = raw.astype(np.float64) / _INT16_SCALE
    else:
        if bits != 32:
            raise AudioFormatError(f"{path}: unsupported float bit depth {bits}")
        raw = np.frombuffer(payload[: len(payload) - len(payload) % (4 * channels)], dtype="<f4")
        samples = raw.astype(np.float64)

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise AudioFormatError(f"{path}: non-finite sample values")
    samples = np.clip(samples, -1.0, 1.0)
    return AudioClip(samples=samples, sample_rate=rate)


def write_wav(path: str | Path, clip: AudioClip) -> None:
    """Write a clip as canonical 16-bit PCM mono WAV.

    Samples are rounded to the nearest 16-bit step and saturate at
    full scale, so an amplitude of 1.0 is stored as 32767.
    """
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.ndim != 1:
        raise AudioFormatError("clip samples must be one-dimensional")
    if samples.size and (not np.all(np.isfinite(samples)) or np.abs(samples).max() > 1.0):
        raise AudioFormatError("clip samples must be finite and within [-1, 1]")

    pcm = np.clip(np.round(samples * _INT16_SCALE), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        _PCM,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)
