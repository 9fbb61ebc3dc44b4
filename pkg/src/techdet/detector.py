"""Detection on fixed and variable-length audio.

The classifier is specific to 10 s inputs. Longer recordings are covered
by 10 s windows advancing in 2 s hops (plus one right-aligned tail window
when the hops do not land on the end); each 0.05 s frame's final
probability vector is the arithmetic mean of the vectors from every
window covering it. Shorter recordings are zero-padded to 10 s and the
padded frames dropped. No post-processing is applied to the output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import FRAME_SECONDS, SEGMENT_FRAMES, SEGMENT_SAMPLES, SEGMENT_SECONDS
from .audio_io import AudioClip
from .dataset import Event, EventAnnotation, TechniqueVocabulary
from .errors import DataError
from .features import mel_filterbank, mel_spectrogram, normalize, FeatureStats
from .fcn.network import FcnParameters, FramePrediction, forward

WINDOW_SECONDS = SEGMENT_SECONDS
HOP_SECONDS = 2.0

_PRED_MAGIC = b"PRED"
_PRED_VERSION = 1


@dataclass(frozen=True)
class WindowPlan:
    """Start offsets (seconds) of the 10 s windows covering a recording."""

    window: float
    hop: float
    starts: tuple[float, ...]


def plan_windows(duration: float, window: float = WINDOW_SECONDS,
                 hop: float = HOP_SECONDS) -> WindowPlan:
    """Window starts at 0, hop, 2*hop, ... plus a right-aligned tail window.

    Start offsets are kept on the 0.05 s frame grid so window predictions
    line up frame-for-frame; audio shorter than one window gets a single
    window over the zero-padded signal.
    """
    if duration <= 0:
        raise DataError(f"duration must be positive, got {duration}")
    n_frames = _ceil_frames(duration)
    window_frames = round(window / FRAME_SECONDS)
    hop_frames = round(hop / FRAME_SECONDS)
    if n_frames <= window_frames:
        return WindowPlan(window=window, hop=hop, starts=(0.0,))

    starts = list(range(0, n_frames - window_frames + 1, hop_frames))
    if starts[-1] + window_frames < n_frames:
        starts.append(n_frames - window_frames)
    return WindowPlan(
        window=window, hop=hop,
        starts=tuple(s * FRAME_SECONDS for s in starts),
    )


def _ceil_frames(duration: float) -> int:
    """ceil(duration / 0.05) computed safely against float droop."""
    n = int(np.ceil(round(duration / FRAME_SECONDS, 9)))
    return max(n, 1)


def _extract_normalized(clip_samples: np.ndarray, params: FcnParameters,
                        filterbank: np.ndarray) -> np.ndarray:
    mel = mel_spectrogram(AudioClip(clip_samples), filterbank)
    stats = FeatureStats(mean=params.norm_mean, std=params.norm_std)
    return normalize(mel, stats).values


def _check_window_model(params: FcnParameters) -> None:
    if params.config.input_frames != SEGMENT_FRAMES:
        raise DataError(
            f"detection needs a model trained on {SEGMENT_FRAMES}-frame (10 s) inputs, "
            f"got input_frames={params.config.input_frames}"
        )


def detect_fixed(params: FcnParameters, clip: AudioClip) -> FramePrediction:
    """Predict per-frame class probabilities for an exactly-10 s clip."""
    _check_window_model(params)
    if clip.num_samples != SEGMENT_SAMPLES:
        raise DataError(
            f"fixed-length detection needs {SEGMENT_SAMPLES} samples, got {clip.num_samples}"
        )
    filterbank = mel_filterbank(n_mels=params.config.input_mels)
    return forward(params, _extract_normalized(clip.samples, params, filterbank))


def detect_variable(params: FcnParameters, clip: AudioClip) -> FramePrediction:
    """Predict probabilities for audio of any length by window averaging.

    Every 0.05 s frame's vector is the mean of the predictions from all
    covering windows, accumulated in window-start order; frames beyond the
    audio extent (introduced by padding) are dropped.
    """
    _check_window_model(params)
    if clip.num_samples == 0:
        raise DataError("cannot run detection on empty audio")
    n_frames = _ceil_frames(clip.duration)
    plan = plan_windows(clip.duration)
    filterbank = mel_filterbank(n_mels=params.config.input_mels)

    k = params.config.k
    sums = np.zeros((k, n_frames))
    counts = np.zeros(n_frames)
    window_samples = SEGMENT_SAMPLES
    for start_s in plan.starts:
        start_f = round(start_s / FRAME_SECONDS)
        lo = start_f * round(FRAME_SECONDS * clip.sample_rate)
        chunk = clip.samples[lo : lo + window_samples]
        if chunk.shape[0] < window_samples:
            chunk = np.pad(chunk, (0, window_samples - chunk.shape[0]))
        pred = forward(params, _extract_normalized(chunk, params, filterbank))
        span = min(SEGMENT_FRAMES, n_frames - start_f)
        sums[:, start_f : start_f + span] += pred.probs[:, :span]
        counts[start_f : start_f + span] += 1.0
    return FramePrediction(probs=sums / counts)


def decode_events(pred: FramePrediction, vocabulary: TechniqueVocabulary) -> EventAnnotation:
    """Merge per-frame argmax labels into events (ties pick the lowest class)."""
    if pred.k != vocabulary.k:
        raise DataError(f"prediction has {pred.k} classes, vocabulary {vocabulary.k}")
    labels = pred.argmax_labels()
    events = []
    run_start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[run_start]:
            events.append(Event(
                onset=run_start * FRAME_SECONDS,
                offset=i * FRAME_SECONDS,
                label=int(labels[run_start]),
            ))
            run_start = i
    return EventAnnotation(tuple(events))


def write_posteriors(path: str | Path, pred: FramePrediction) -> None:
    """Binary posterior dump: 16-byte header (magic "PRED", version, k,
    n_frames) then float32 probabilities, row-major."""
    header = struct.pack("<4sIII", _PRED_MAGIC, _PRED_VERSION, pred.k, pred.n_frames)
    Path(path).write_bytes(header + pred.probs.astype("<f4").tobytes())


def read_posteriors(path: str | Path) -> FramePrediction:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _PRED_MAGIC:
        raise DataError(f"{path}: not a posterior dump")
    _, version, k, n_frames = struct.unpack_from("<4sIII", data, 0)
    if version != _PRED_VERSION:
        raise DataError(f"{path}: unsupported posterior dump version {version}")
    if len(data) < 16 + 4 * k * n_frames:
        raise DataError(f"{path}: truncated posterior dump")
    probs = np.frombuffer(data, dtype="<f4", count=k * n_frames, offset=16)
    return FramePrediction(probs=probs.reshape(k, n_frames).astype(np.float64))
