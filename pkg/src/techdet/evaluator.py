"""Frame-level scoring, dataset evaluation, and event-roll rendering.

The segment score is the fraction of frames whose predicted class equals
the reference class; dataset accuracy is the unweighted mean over
segments. Visualization writes standalone SVG with one lane per class,
reference bars above predicted bars.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import read_wav
from .dataset import (
    DatasetManifest,
    EventAnnotation,
    TechniqueVocabulary,
    load_manifest,
    read_frame_labels,
)
from .detector import detect_fixed
from .errors import DataError


@dataclass
class EvalReport:
    """Dataset-level scores: per-segment, aggregate, and per-class."""

    vocabulary: TechniqueVocabulary
    per_segment: list[tuple[str, float]]
    average_accuracy: float
    confusion: np.ndarray  # (k, k), rows = truth, columns = prediction
    precision: np.ndarray
    recall: np.ndarray

    @property
    def total_frames(self) -> int:
        return int(self.confusion.sum())


def frame_accuracy(pred_labels: np.ndarray, true_labels: np.ndarray) -> float:
    """Fraction of frames where prediction equals reference."""
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape or pred_labels.ndim != 1:
        raise DataError(
            f"label sequences must match: {pred_labels.shape} vs {true_labels.shape}"
        )
    if pred_labels.shape[0] == 0:
        raise DataError("cannot score empty label sequences")
    return float((pred_labels == true_labels).mean())


def confusion_matrix(pred_labels: np.ndarray, true_labels: np.ndarray, k: int) -> np.ndarray:
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (true_labels, pred_labels), 1)
    return counts


def evaluate_dataset(params, manifest, predict_fn=None) -> EvalReport:
    """Score a model (or injected predictor) over a dataset manifest.

    `predict_fn`, when given, maps an AudioClip to a FramePrediction and
    replaces the model; otherwise each 10 s segment goes through the
    fixed-length detection path of `params`.
    """
    man: DatasetManifest = manifest if isinstance(manifest, DatasetManifest) else load_manifest(manifest)
    if not man.segments:
        raise DataError("dataset manifest lists no segments")
    if predict_fn is None:
        predict_fn = lambda clip: detect_fixed(params, clip)

    k = man.vocabulary.k
    confusion = np.zeros((k, k), dtype=np.int64)
    per_segment: list[tuple[str, float]] = []
    for rec in man.segments:
        clip = read_wav(Path(man.root) / rec.audio)
        truth = read_frame_labels(Path(man.root) / rec.frame_labels)
        pred = predict_fn(clip).argmax_labels()
        if pred.shape != truth.shape:
            raise DataError(
                f"{rec.audio}: prediction has {pred.shape[0]} frames, reference {truth.shape[0]}"
            )
        per_segment.append((rec.audio, frame_accuracy(pred, truth)))
        confusion += confusion_matrix(pred, truth, k)

    truth_totals = confusion.sum(axis=1)
    pred_totals = confusion.sum(axis=0)
    diag = np.diag(confusion)
    with np.errstate(invalid="ignore"):
        recall = np.where(truth_totals > 0, diag / truth_totals, 0.0)
        precision = np.where(pred_totals > 0, diag / pred_totals, 0.0)

    return EvalReport(
        vocabulary=man.vocabulary,
        per_segment=per_segment,
        average_accuracy=float(np.mean([acc for _, acc in per_segment])),
        confusion=confusion,
        precision=precision,
        recall=recall,
    )


def save_report(report: EvalReport, path: str | Path) -> None:
    doc = {
        "average_accuracy": report.average_accuracy,
        "total_frames": report.total_frames,
        "vocabulary": report.vocabulary.to_dict(),
        "per_segment": [{"audio": a, "accuracy": acc} for a, acc in report.per_segment],
        "confusion": report.confusion.tolist(),
        "per_class": [
            {
                "label": label,
                "precision": float(report.precision[i]),
                "recall": float(report.recall[i]),
            }
            for i, label in enumerate(report.vocabulary.labels)
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def save_confusion_csv(report: EvalReport, path: str | Path) -> None:
    """Confusion matrix as CSV; rows are truth, columns are prediction."""
    labels = report.vocabulary.labels
    lines = ["truth\\pred," + ",".join(labels)]
    for i, label in enumerate(labels):
        lines.append(label + "," + ",".join(str(int(v)) for v in report.confusion[i]))
    Path(path).write_text("\n".join(lines) + "\n")


# --- event-roll SVG ----------------------------------------------------------

_REF_COLOR = "#4878cf"
_PRED_COLOR = "#ee854a"
_LANE_HEIGHT = 44
_BAR_HEIGHT = 16
_LEFT_MARGIN = 130
_TOP_MARGIN = 34


def render_event_roll(
    reference: EventAnnotation,
    predicted: EventAnnotation,
    duration: float,
    vocabulary: TechniqueVocabulary,
    out_path: str | Path,
    px_per_second: float = 100.0,
) -> None:
    """Write an SVG timeline: one lane per class, reference above predicted."""
    if duration <= 0:
        raise DataError("duration must be positive")
    k = vocabulary.k
    plot_w = duration * px_per_second
    width = _LEFT_MARGIN + plot_w + 20
    height = _TOP_MARGIN + k * _LANE_HEIGHT + 40

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'font-family="sans-serif" font-size="12">',
        f'<text x="{_LEFT_MARGIN}" y="16" fill="{_REF_COLOR}">reference</text>',
        f'<text x="{_LEFT_MARGIN + 80}" y="16" fill="{_PRED_COLOR}">predicted</text>',
    ]
    for i, label in enumerate(vocabulary.labels):
        lane_y = _TOP_MARGIN + i * _LANE_HEIGHT
        parts.append(f'<g id="lane-{i}" transform="translate({_LEFT_MARGIN},{lane_y})">')
        parts.append(
            f'<text x="{-_LEFT_MARGIN + 8}" y="{_LANE_HEIGHT / 2 + 4:g}">{_escape(label)}</text>'
        )
        parts.append(
            f'<line x1="0" y1="{_LANE_HEIGHT:g}" x2="{plot_w:g}" y2="{_LANE_HEIGHT:g}" '
            'stroke="#ddd"/>'
        )
        for group, annotation, color, y in (
            ("ref", reference, _REF_COLOR, 4),
            ("pred", predicted, _PRED_COLOR, 4 + _BAR_HEIGHT + 4),
        ):
            parts.append(f'<g class="{group}">')
            for ev in annotation.events:
                if ev.label != i:
                    continue
                x = ev.onset * px_per_second
                w = (ev.offset - ev.onset) * px_per_second
                parts.append(
                    f'<rect x="{x:g}" y="{y:g}" width="{w:g}" height="{_BAR_HEIGHT:g}" '
                    f'fill="{color}" fill-opacity="0.85"/>'
                )
            parts.append("</g>")
        parts.append("</g>")

    axis_y = _TOP_MARGIN + k * _LANE_HEIGHT
    parts.append(
        f'<g id="time-axis" transform="translate({_LEFT_MARGIN},{axis_y})">'
    )
    for tick in _ticks(duration):
        x = tick * px_per_second
        parts.append(f'<line x1="{x:g}" y1="0" x2="{x:g}" y2="6" stroke="#444"/>')
        parts.append(f'<text x="{x:g}" y="20" text-anchor="middle">{tick:g}s</text>')
    parts.append("</g>")
    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n")


def _ticks(duration: float) -> list[float]:
    for step in (1.0, 2.0, 5.0, 10.0, 30.0, 60.0, 300.0):
        if duration / step <= 20:
            break
    return [i * step for i in range(int(duration / step) + 1)]


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
