"""The fixed fully convolutional frame classifier.

Reference stack for a (1, mels, frames) input:

    3 x [3x3 conv -> ReLU -> 2x2 max-pool]   mels/8 x frames/8, widening channels
    3x3 conv -> ReLU                          keeps shape
    full-height max-pool                      collapses the mel axis
    transposed conv over time (kernel 8, stride 8)   restores the frame axis
    1x1 conv to k channels -> per-frame softmax

The transposed-conv kernel/stride are configurable; construction rejects
any combination that does not land back on the input frame count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import TechniqueVocabulary
from ..errors import ConfigError, DataError, InternalError
from . import layers

N_POOLS = 3
POOL_FACTOR = 2 ** N_POOLS
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class FcnConfig:
    """Architecture and training hyperparameters."""

    k: int
    channels: tuple[int, int, int, int] = (16, 32, 64, 64)
    deconv_kernel: int = 8
    deconv_stride: int = 8
    input_mels: int = 128
    input_frames: int = 200
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")
        if len(self.channels) != 4 or any(c < 1 for c in self.channels):
            raise ConfigError(f"channels must be 4 positive widths, got {self.channels}")
        if self.deconv_kernel < 1 or self.deconv_stride < 1:
            raise ConfigError("deconv kernel and stride must be positive")
        for name, size in (("input_mels", self.input_mels), ("input_frames", self.input_frames)):
            if size < POOL_FACTOR or size % POOL_FACTOR:
                raise ConfigError(f"{name} must be a positive multiple of {POOL_FACTOR}")
        restored = (self.time_after_pools - 1) * self.deconv_stride + self.deconv_kernel
        if restored != self.input_frames:
            raise ConfigError(
                f"deconv (kernel={self.deconv_kernel}, stride={self.deconv_stride}) maps "
                f"{self.time_after_pools} frames to {restored}, not {self.input_frames}"
            )
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")

    @property
    def mels_after_pools(self) -> int:
        return self.input_mels // POOL_FACTOR

    @property
    def time_after_pools(self) -> int:
        return self.input_frames // POOL_FACTOR

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "channels": list(self.channels),
            "deconv_kernel": self.deconv_kernel,
            "deconv_stride": self.deconv_stride,
            "input_mels": self.input_mels,
            "input_frames": self.input_frames,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FcnConfig":
        d = dict(d)
        if "channels" in d:
            d["channels"] = tuple(d["channels"])
        return cls(**d)


def param_shapes(config: FcnConfig) -> dict[str, tuple[int, ...]]:
    """Parameter tensors in declared (serialization) order."""
    c1, c2, c3, c4 = config.channels
    return {
        "conv1.w": (c1, 1, 3, 3), "conv1.b": (c1,),
        "conv2.w": (c2, c1, 3, 3), "conv2.b": (c2,),
        "conv3.w": (c3, c2, 3, 3), "conv3.b": (c3,),
        "conv4.w": (c4, c3, 3, 3), "conv4.b": (c4,),
        "deconv5.w": (c4, c4, config.deconv_kernel), "deconv5.b": (c4,),
        "head.w": (config.k, c4, 1, 1), "head.b": (config.k,),
    }


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name == "deconv5.w":
        return shape[0] * shape[2]
    return int(np.prod(shape[1:]))


@dataclass
class FcnParameters:
    """Trainable tensors plus everything inference needs around them."""

    config: FcnConfig
    arrays: dict[str, np.ndarray]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    vocabulary: TechniqueVocabulary | None = None

    def copy(self) -> "FcnParameters":
        return FcnParameters(
            config=self.config,
            arrays={k: v.copy() for k, v in self.arrays.items()},
            norm_mean=self.norm_mean.copy(),
            norm_std=self.norm_std.copy(),
            vocabulary=self.vocabulary,
        )


@dataclass(frozen=True)
class FramePrediction:
    """Per-frame class probabilities, shaped (k, n_frames)."""

    probs: np.ndarray

    @property
    def k(self) -> int:
        return self.probs.shape[0]

    @property
    def n_frames(self) -> int:
        return self.probs.shape[1]

    def argmax_labels(self) -> np.ndarray:
        """Most probable class per frame; ties go to the lowest index."""
        return self.probs.argmax(axis=0)


def init_params(config: FcnConfig, seed: int | None = None) -> FcnParameters:
    """Fan-in-scaled uniform weights (bound sqrt(6/fan_in)), zero biases.

    Deterministic for a given (config, seed); seed defaults to config.seed.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    arrays: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if name.endswith(".b"):
            arrays[name] = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / _fan_in(name, shape))
            arrays[name] = rng.uniform(-bound, bound, size=shape)
    return FcnParameters(
        config=config,
        arrays=arrays,
        norm_mean=np.zeros(config.input_mels),
        norm_std=np.ones(config.input_mels),
        vocabulary=None,
    )


def _forward_batch(params: FcnParameters, x: np.ndarray, keep_cache: bool = False):
    """Run the stack on (B, 1, mels, frames); returns (probs, caches)."""
    a = x
    p = params.arrays
    caches = []
    for i in (1, 2, 3):
        a, c_conv = layers.conv2d(a, p[f"conv{i}.w"], p[f"conv{i}.b"])
        a, c_relu = layers.relu(a)
        a, c_pool = layers.maxpool2d(a, 2, 2)
        caches.append((c_conv, c_relu, c_pool))
    a, c_conv4 = layers.conv2d(a, p["conv4.w"], p["conv4.b"])
    a, c_relu4 = layers.relu(a)
    a, c_melpool = layers.maxpool2d(a, params.config.mels_after_pools, 1)
    squeezed_shape = a.shape
    a = a[:, :, 0, :]  # (B, C, T)
    a, c_deconv = layers.time_deconv(
        a, p["deconv5.w"], p["deconv5.b"], params.config.deconv_stride
    )
    a = a[:, :, None, :]  # (B, C, 1, T)
    a, c_head = layers.conv2d(a, p["head.w"], p["head.b"])
    logits = a[:, :, 0, :]  # (B, k, T)
    probs = layers.softmax(logits, axis=1)
    if keep_cache:
        caches.append((c_conv4, c_relu4, c_melpool, squeezed_shape, c_deconv, c_head))
        return probs, caches
    return probs, None


def _backward_batch(params: FcnParameters, dlogits: np.ndarray, caches):
    """Backpropagate d(loss)/d(logits) through the stack; returns gradients."""
    grads: dict[str, np.ndarray] = {}
    c_conv4, c_relu4, c_melpool, squeezed_shape, c_deconv, c_head = caches[-1]

    da = dlogits[:, :, None, :]
    da, grads["head.w"], grads["head.b"] = layers.conv2d_backward(da, c_head)
    da = da[:, :, 0, :]
    da, grads["deconv5.w"], grads["deconv5.b"] = layers.time_deconv_backward(da, c_deconv)
    da = da.reshape(squeezed_shape)
    da = layers.maxpool2d_backward(da, c_melpool)
    da = layers.relu_backward(da, c_relu4)
    da, grads["conv4.w"], grads["conv4.b"] = layers.conv2d_backward(da, c_conv4)

    for i in (3, 2, 1):
        c_conv, c_relu, c_pool = caches[i - 1]
        da = layers.maxpool2d_backward(da, c_pool)
        da = layers.relu_backward(da, c_relu)
        da, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = layers.conv2d_backward(da, c_conv)

    return {name: grads[name] for name in params.arrays}


def _check_input(params: FcnParameters, mel: np.ndarray) -> np.ndarray:
    mel = np.asarray(mel, dtype=np.float64)
    expected = (params.config.input_mels, params.config.input_frames)
    if mel.shape != expected:
        raise DataError(f"input shape {mel.shape} != expected {expected}")
    return mel


def forward(params: FcnParameters, mel: np.ndarray) -> FramePrediction:
    """Per-frame class distributions for one normalized mel spectrogram."""
    mel = _check_input(params, mel)
    probs, _ = _forward_batch(params, mel[None, None])
    if not np.all(np.isfinite(probs)):
        raise InternalError("non-finite activations in forward pass")
    return FramePrediction(probs=probs[0])


def loss(pred: FramePrediction | np.ndarray, labels: np.ndarray) -> float:
    """Mean per-frame cross-entropy, -log p(true class), floored at 1e-12."""
    probs = pred.probs if isinstance(pred, FramePrediction) else np.asarray(pred)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or probs.shape[1] != labels.shape[0]:
        raise DataError(f"prediction has {probs.shape[1]} frames, labels {labels.shape}")
    true_probs = probs[labels, np.arange(labels.shape[0])]
    return float(-np.log(np.maximum(true_probs, PROB_FLOOR)).mean())


def _loss_and_grads(params: FcnParameters, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over all (segment, frame) pairs and its gradients.

    The analytic gradient is the standard softmax/cross-entropy form; the
    1e-12 probability floor only guards the reported loss value.
    """
    probs, caches = _forward_batch(params, x, keep_cache=True)
    batch, _, frames = probs.shape
    b_idx = np.arange(batch)[:, None]
    t_idx = np.arange(frames)[None, :]
    true_probs = probs[b_idx, labels, t_idx]
    loss_value = float(-np.log(np.maximum(true_probs, PROB_FLOOR)).mean())

    dlogits = probs.copy()
    np.subtract.at(dlogits, (b_idx, labels, t_idx), 1.0)
    dlogits /= batch * frames
    return loss_value, _backward_batch(params, dlogits, caches)


def gradients(params: FcnParameters, batch) -> dict[str, np.ndarray]:
    """Analytic gradient of the mean batch loss for every parameter.

    `batch` is a sequence of (normalized mel, frame labels) pairs; the
    returned dict mirrors the parameter names and shapes.
    """
    mels = np.stack([_check_input(params, m) for m, _ in batch])[:, None]
    labels = np.stack([np.asarray(l, dtype=np.int64) for _, l in batch])
    if labels.shape[1] != params.config.input_frames:
        raise DataError(
            f"labels have {labels.shape[1]} frames, expected {params.config.input_frames}"
        )
    _, grads = _loss_and_grads(params, mels, labels)
    return grads
