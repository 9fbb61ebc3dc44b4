"""Randomized synthesis of fixed-length labeled segments from short clips.

Short single-technique clips are drawn uniformly at random, joined with
50 ms linear crossfades until the running total reaches 10 s, and the
excess is trimmed. Event boundaries sit at crossfade midpoints; frame
labels (one per 0.05 s) follow the event containing each frame center.
A per-segment check rejects repeated clip-id sequences.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import FRAME_SECONDS, SAMPLE_RATE, SEGMENT_FRAMES, SEGMENT_SECONDS
from .audio_io import AudioClip, read_wav, write_wav
from .errors import DataError

CROSSFADE_SECONDS = 0.05
DEDUP_RETRIES = 100

MIN_CLIP_SECONDS = 0.1
MAX_CLIP_SECONDS = 10.0


@dataclass(frozen=True)
class TechniqueVocabulary:
    """Ordered class labels, one of which is the catch-all "other" class."""

    labels: tuple[str, ...]
    other_index: int

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2:
            raise DataError("vocabulary needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels) or not all(self.labels):
            raise DataError("vocabulary labels must be unique and non-empty")
        if not 0 <= self.other_index < len(self.labels):
            raise DataError(f"other_index {self.other_index} out of range")

    @property
    def k(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"unknown technique label {label!r}") from None

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "other_index": self.other_index}

    @classmethod
    def from_dict(cls, d: dict) -> "TechniqueVocabulary":
        labels = d.get("labels")
        if not isinstance(labels, list):
            raise DataError("vocabulary JSON needs a 'labels' list")
        if "other_index" in d:
            other = d["other_index"]
        elif "other_label" in d:
            other = labels.index(d["other_label"]) if d["other_label"] in labels else -1
        else:
            raise DataError("vocabulary JSON needs 'other_index' or 'other_label'")
        return cls(labels=tuple(labels), other_index=other)

    @classmethod
    def from_json_file(cls, path: str | Path) -> "TechniqueVocabulary":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid vocabulary JSON ({e})") from None


@dataclass(frozen=True)
class Event:
    """One labeled span: [onset, offset) in seconds, class index."""

    onset: float
    offset: float
    label: int


@dataclass(frozen=True)
class EventAnnotation:
    """Sorted, non-overlapping events for one monophonic recording."""

    events: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        for i, ev in enumerate(self.events):
            if not 0 <= ev.onset < ev.offset:
                raise DataError(f"event {i}: bad span [{ev.onset}, {ev.offset})")
            if i and ev.onset < self.events[i - 1].offset:
                raise DataError(f"event {i} overlaps its predecessor")


@dataclass(frozen=True)
class ClipEntry:
    clip: AudioClip
    label: int
    source: str


@dataclass
class ClipLibrary:
    """Short-clip pool plus the vocabulary its labels refer to."""

    entries: list[ClipEntry]
    vocabulary: TechniqueVocabulary

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class SegmentRecord:
    audio: str
    annotation: str
    frame_labels: str
    clip_ids: tuple[int, ...]


@dataclass
class DatasetManifest:
    """Index of a synthesized dataset; all paths relative to its directory."""

    seed: int
    vocabulary: TechniqueVocabulary
    segments: list[SegmentRecord]
    root: Path = field(default_factory=Path)


def load_clip_library(manifest_path: str | Path, vocabulary: TechniqueVocabulary) -> ClipLibrary:
    """Load clips listed in a `path,label` CSV; paths resolve against the CSV.

    Raises DataError for unknown labels, unreadable or out-of-bounds clips,
    or an empty manifest.
    """
    manifest_path = Path(manifest_path)
    entries: list[ClipEntry] = []
    with open(manifest_path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row_no == 1 and [c.strip() for c in row] == ["path", "label"]):
                continue
            if len(row) != 2:
                raise DataError(f"{manifest_path}:{row_no}: expected `path,label`, got {row!r}")
            rel, label = row[0].strip(), row[1].strip()
            index = vocabulary.index_of(label)
            wav_path = manifest_path.parent / rel
            try:
                clip = read_wav(wav_path)
            except FileNotFoundError:
                raise DataError(f"{manifest_path}:{row_no}: clip not found: {wav_path}") from None
            if not MIN_CLIP_SECONDS <= clip.duration <= MAX_CLIP_SECONDS:
                raise DataError(
                    f"{manifest_path}:{row_no}: clip duration {clip.duration:.3f}s "
                    f"outside [{MIN_CLIP_SECONDS}, {MAX_CLIP_SECONDS}]s"
                )
            entries.append(ClipEntry(clip=clip, label=index, source=rel))
    if not entries:
        raise DataError(f"{manifest_path}: empty clip library")
    return ClipLibrary(entries=entries, vocabulary=vocabulary)


def crossfade_concat(a: AudioClip, b: AudioClip, overlap: float = CROSSFADE_SECONDS) -> AudioClip:
    """Join two clips with a linear crossfade of `overlap` seconds.

    In the overlap the output is a*fade_out + b*fade_in; the ramps are
    (j+1)/(n+1) and its complement, which sum to exactly 1.0 at every
    sample. overlap=0 degenerates to plain concatenation.
    """
    if a.sample_rate != b.sample_rate:
        raise DataError("cannot crossfade clips with different sample rates")
    n = round(overlap * a.sample_rate)
    if n > a.num_samples or n > b.num_samples:
        raise DataError(
            f"crossfade of {n} samples exceeds a clip length "
            f"({a.num_samples} / {b.num_samples})"
        )
    if n == 0:
        return AudioClip(np.concatenate([a.samples, b.samples]), a.sample_rate)

    fade_in = np.arange(1, n + 1, dtype=np.float64) / (n + 1)
    fade_out = 1.0 - fade_in
    mixed = a.samples[-n:] * fade_out + b.samples[:n] * fade_in
    out = np.concatenate([a.samples[:-n], mixed, b.samples[n:]])
    return AudioClip(out, a.sample_rate)


def _plan_clip_ids(rng: np.random.Generator, clip_samples, duration_samples: int,
                   overlap_samples: int) -> tuple[int, ...]:
    """Draw clip indices uniformly until the crossfaded total reaches duration."""
    ids: list[int] = []
    total = 0
    while total < duration_samples:
        i = int(rng.integers(0, len(clip_samples)))
        total += clip_samples[i] - (overlap_samples if ids else 0)
        ids.append(i)
    return tuple(ids)


def _render_segment(library: ClipLibrary, ids, duration_samples: int,
                    overlap: float) -> tuple[AudioClip, EventAnnotation]:
    """Crossfade-concatenate the chosen clips, trim, and derive events.

    Event boundaries sit at the midpoint of each crossfade; the last
    offset is clamped to the segment duration.
    """
    sr = SAMPLE_RATE
    overlap_samples = round(overlap * sr)
    audio = library.entries[ids[0]].clip
    boundaries = [0.0]  # in samples; crossfade midpoints are half-integral
    for i in ids[1:]:
        boundaries.append(audio.num_samples - overlap_samples / 2)
        audio = crossfade_concat(audio, library.entries[i].clip, overlap)

    samples = audio.samples[:duration_samples]
    duration = duration_samples / sr
    events = []
    for j, start in enumerate(boundaries):
        if start >= duration_samples:
            break
        end = boundaries[j + 1] if j + 1 < len(boundaries) else duration_samples
        events.append(Event(
            onset=start / sr,
            offset=min(end, duration_samples) / sr,
            label=library.entries[ids[j]].label,
        ))
    events[-1] = Event(events[-1].onset, duration, events[-1].label)
    return AudioClip(samples, sr), EventAnnotation(tuple(events))


def synthesize_segment(
    library: ClipLibrary,
    rng: np.random.Generator,
    duration: float = SEGMENT_SECONDS,
    crossfade: float = CROSSFADE_SECONDS,
) -> tuple[AudioClip, EventAnnotation, tuple[int, ...]]:
    """Build one random fixed-length segment with its event annotation."""
    if not library.entries:
        raise DataError("clip library is empty")
    duration_samples = round(duration * SAMPLE_RATE)
    overlap_samples = round(crossfade * SAMPLE_RATE)
    lengths = [e.clip.num_samples for e in library.entries]
    ids = _plan_clip_ids(rng, lengths, duration_samples, overlap_samples)
    audio, annotation = _render_segment(library, ids, duration_samples, crossfade)
    return audio, annotation, ids


def events_to_frame_labels(
    annotation: EventAnnotation,
    frame_len: float = FRAME_SECONDS,
    n_frames: int = SEGMENT_FRAMES,
) -> np.ndarray:
    """Label each frame with the event containing its center (i+0.5)*frame_len.

    Events are half-open [onset, offset): a boundary landing exactly on a
    frame center assigns that frame to the later event. Raises DataError
    if any frame center falls in a gap or past the final offset.
    """
    events = annotation.events
    labels = np.empty(n_frames, dtype=np.int64)
    ptr = 0
    for i in range(n_frames):
        center = (i + 0.5) * frame_len
        while ptr < len(events) and center >= events[ptr].offset:
            ptr += 1
        if ptr == len(events) or center < events[ptr].onset:
            raise DataError(f"annotation does not cover frame {i} (center {center:.4f}s)")
        labels[i] = events[ptr].label
    return labels


def build_dataset(
    library: ClipLibrary,
    n_segments: int,
    seed: int,
    out_dir: str | Path,
    duration: float = SEGMENT_SECONDS,
    crossfade: float = CROSSFADE_SECONDS,
) -> DatasetManifest:
    """Synthesize and write `n_segments` labeled segments plus a manifest.

    Segment i draws from an RNG stream seeded by (seed, i); a segment whose
    clip-id sequence repeats an earlier one is re-drawn from the same
    stream, up to 100 attempts. Outputs are fully determined by the seed
    and library, and the manifest references files by relative name.
    """
    if n_segments < 1:
        raise DataError("n_segments must be >= 1")
    if not library.entries:
        raise DataError("clip library is empty")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    duration_samples = round(duration * SAMPLE_RATE)
    overlap_samples = round(crossfade * SAMPLE_RATE)
    n_frames = num_segment_frames(duration)
    lengths = [e.clip.num_samples for e in library.entries]

    seen: set[tuple[int, ...]] = set()
    records: list[SegmentRecord] = []
    for idx in range(n_segments):
        rng = np.random.default_rng([seed, idx])
        for _ in range(DEDUP_RETRIES):
            ids = _plan_clip_ids(rng, lengths, duration_samples, overlap_samples)
            if ids not in seen:
                break
        else:
            raise DataError(
                f"segment {idx}: no unseen clip sequence in {DEDUP_RETRIES} attempts; "
                "the library is too small for the requested segment count"
            )
        seen.add(ids)

        audio, annotation = _render_segment(library, ids, duration_samples, crossfade)
        labels = events_to_frame_labels(annotation, FRAME_SECONDS, n_frames)
        stem = f"seg_{idx:05d}"
        record = SegmentRecord(
            audio=f"{stem}.wav",
            annotation=f"{stem}.events.jsonl",
            frame_labels=f"{stem}.labels.csv",
            clip_ids=ids,
        )
        write_wav(out_dir / record.audio, audio)
        write_annotation(out_dir / record.annotation, annotation, library.vocabulary)
        write_frame_labels(out_dir / record.frame_labels, labels)
        records.append(record)

    manifest = DatasetManifest(
        seed=seed, vocabulary=library.vocabulary, segments=records, root=out_dir
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def num_segment_frames(duration: float = SEGMENT_SECONDS) -> int:
    n = round(duration / FRAME_SECONDS)
    if abs(n * FRAME_SECONDS - duration) > 1e-9:
        raise DataError(f"segment duration {duration}s is not a multiple of the 0.05s frame")
    return n


# --- file formats -----------------------------------------------------------

def write_annotation(path: str | Path, annotation: EventAnnotation,
                     vocabulary: TechniqueVocabulary) -> None:
    """One JSON object per line: {"onset": s, "offset": s, "label": name}."""
    lines = [
        json.dumps({"onset": ev.onset, "offset": ev.offset,
                    "label": vocabulary.labels[ev.label]})
        for ev in annotation.events
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_annotation(path: str | Path, vocabulary: TechniqueVocabulary) -> EventAnnotation:
    events = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            events.append(Event(onset=float(obj["onset"]), offset=float(obj["offset"]),
                                label=vocabulary.index_of(obj["label"])))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"{path}:{line_no}: bad event line ({e})") from None
    return EventAnnotation(tuple(events))


def write_frame_labels(path: str | Path, labels: np.ndarray) -> None:
    """One class index per line."""
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def read_frame_labels(path: str | Path) -> np.ndarray:
    try:
        return np.array(
            [int(line) for line in Path(path).read_text().split()], dtype=np.int64
        )
    except ValueError as e:
        raise DataError(f"{path}: bad frame-label file ({e})") from None


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "seed": manifest.seed,
        "vocabulary": manifest.vocabulary.to_dict(),
        "segments": [
            {
                "audio": rec.audio,
                "annotation": rec.annotation,
                "frame_labels": rec.frame_labels,
                "clip_ids": list(rec.clip_ids),
            }
            for rec in manifest.segments
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        vocabulary = TechniqueVocabulary.from_dict(doc["vocabulary"])
        segments = [
            SegmentRecord(
                audio=seg["audio"],
                annotation=seg["annotation"],
                frame_labels=seg["frame_labels"],
                clip_ids=tuple(int(i) for i in seg["clip_ids"]),
            )
            for seg in doc["segments"]
        ]
        return DatasetManifest(
            seed=int(doc["seed"]), vocabulary=vocabulary, segments=segments,
            root=path.parent,
        )
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"{path}: bad dataset manifest ({e})") from None
