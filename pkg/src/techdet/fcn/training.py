"""Adam training loop over synthesized datasets.

Features are extracted once up front, z-normalized with statistics from
the training set, and the whole run is reproducible from the config seed:
initialization, shuffling, and updates all derive from it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import features
from ..audio_io import read_wav
from ..dataset import DatasetManifest, load_manifest, read_frame_labels
from ..errors import ConfigError, DataError, TrainingDivergedError
from .network import FcnConfig, FcnParameters, _forward_batch, _loss_and_grads, init_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _resolve(manifest) -> DatasetManifest:
    if isinstance(manifest, DatasetManifest):
        return manifest
    return load_manifest(manifest)


def load_features(manifest: DatasetManifest, config: FcnConfig):
    """Mel features and labels for every segment: (N, mels, T), (N, T)."""
    if not manifest.segments:
        raise DataError("dataset manifest lists no segments")
    if config.k != manifest.vocabulary.k:
        raise ConfigError(
            f"config k={config.k} does not match vocabulary size {manifest.vocabulary.k}"
        )
    filterbank = features.mel_filterbank(n_mels=config.input_mels)
    mels, labels = [], []
    for rec in manifest.segments:
        clip = read_wav(Path(manifest.root) / rec.audio)
        mel = features.mel_spectrogram(clip, filterbank)
        if mel.values.shape != (config.input_mels, config.input_frames):
            raise DataError(
                f"{rec.audio}: feature shape {mel.values.shape} != "
                f"({config.input_mels}, {config.input_frames})"
            )
        seq = read_frame_labels(Path(manifest.root) / rec.frame_labels)
        if seq.shape != (config.input_frames,):
            raise DataError(f"{rec.frame_labels}: expected {config.input_frames} labels")
        if seq.min() < 0 or seq.max() >= config.k:
            raise DataError(f"{rec.frame_labels}: label index outside [0, {config.k})")
        mels.append(mel.values)
        labels.append(seq)
    return np.stack(mels), np.stack(labels)


class _Adam:
    def __init__(self, arrays: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for name in arrays:
            g = grads[name]
            self.m[name] = ADAM_BETA1 * self.m[name] + (1.0 - ADAM_BETA1) * g
            self.v[name] = ADAM_BETA2 * self.v[name] + (1.0 - ADAM_BETA2) * g * g
            arrays[name] -= self.lr * (self.m[name] / bc1) / (
                np.sqrt(self.v[name] / bc2) + ADAM_EPS
            )


def _mean_val_accuracy(params: FcnParameters, mels: np.ndarray, labels: np.ndarray,
                       chunk: int = 16) -> float:
    accs = []
    for start in range(0, mels.shape[0], chunk):
        probs, _ = _forward_batch(params, mels[start : start + chunk, None])
        pred = probs.argmax(axis=1)
        accs.extend((pred == labels[start : start + chunk]).mean(axis=1))
    return float(np.mean(accs))


def train(config: FcnConfig, train_manifest, val_manifest, log=None):
    """Train the classifier; returns (best-validation params, history).

    History holds one row per epoch: train loss (mean cross-entropy over
    all frames seen) and validation frame accuracy (unweighted mean over
    segments). The returned parameters are from the epoch with the best
    validation accuracy, earliest epoch winning ties.
    """
    train_man = _resolve(train_manifest)
    val_man = _resolve(val_manifest)

    train_x, train_y = load_features(train_man, config)
    val_x, val_y = load_features(val_man, config)

    stats = features.FeatureStats(
        mean=train_x.mean(axis=(0, 2)), std=train_x.std(axis=(0, 2))
    )
    std = np.maximum(stats.std, features.STD_FLOOR)
    train_x = (train_x - stats.mean[:, None]) / std[:, None]
    val_x = (val_x - stats.mean[:, None]) / std[:, None]

    params = init_params(config)
    params.norm_mean = stats.mean
    params.norm_std = stats.std
    params.vocabulary = train_man.vocabulary

    optimizer = _Adam(params.arrays, config.learning_rate)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    n = train_x.shape[0]

    history: list[dict] = []
    best_params = params.copy()
    best_acc = -1.0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_loss, grads = _loss_and_grads(params, train_x[idx][:, None], train_y[idx])
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"epoch {epoch}, batch {start // config.batch_size}: "
                    f"loss is {batch_loss}"
                )
            total_loss += batch_loss * len(idx)
            optimizer.step(params.arrays, grads)

        val_acc = _mean_val_accuracy(params, val_x, val_y)
        row = {"epoch": epoch, "train_loss": total_loss / n, "val_accuracy": val_acc}
        history.append(row)
        if log is not None:
            log(f"epoch {epoch:3d}  train_loss {row['train_loss']:.4f}  "
                f"val_accuracy {val_acc:.4f}")
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = params.copy()

    return best_params, history
