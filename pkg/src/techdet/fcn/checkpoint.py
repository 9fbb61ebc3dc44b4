"""Checkpoint file format.

Layout: 16-byte header (magic "FCN1", u32 version, u64 metadata length),
JSON metadata (config, vocabulary, normalization stats), then all weight
tensors as one little-endian float64 blob in declared layer order.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..dataset import TechniqueVocabulary
from ..errors import CheckpointError, ConfigError, DataError
from .network import FcnConfig, FcnParameters, param_shapes

_MAGIC = b"FCN1"
_VERSION = 1


def save_checkpoint(params: FcnParameters, path: str | Path) -> None:
    """Write parameters, config, vocabulary, and stats to one file."""
    meta = {
        "config": params.config.to_dict(),
        "vocabulary": params.vocabulary.to_dict() if params.vocabulary else None,
        "norm_mean": params.norm_mean.tolist(),
        "norm_std": params.norm_std.tolist(),
    }
    meta_bytes = json.dumps(meta).encode("utf-8")
    blob = b"".join(
        params.arrays[name].astype("<f8").tobytes() for name in param_shapes(params.config)
    )
    header = struct.pack("<4sIQ", _MAGIC, _VERSION, len(meta_bytes))
    Path(path).write_bytes(header + meta_bytes + blob)


def load_checkpoint(path: str | Path) -> FcnParameters:
    """Read a checkpoint; raises CheckpointError on any format problem."""
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise CheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, meta_len = struct.unpack_from("<4sIQ", data, 0)
    if magic != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(data) < 16 + meta_len:
        raise CheckpointError(f"{path}: truncated metadata")

    try:
        meta = json.loads(data[16 : 16 + meta_len].decode("utf-8"))
        config = FcnConfig.from_dict(meta["config"])
        vocabulary = (
            TechniqueVocabulary.from_dict(meta["vocabulary"]) if meta["vocabulary"] else None
        )
        norm_mean = np.asarray(meta["norm_mean"], dtype=np.float64)
        norm_std = np.asarray(meta["norm_std"], dtype=np.float64)
    except (json.JSONDecodeError, KeyError, TypeError, ConfigError, DataError) as e:
        raise CheckpointError(f"{path}: bad checkpoint metadata ({e})") from None

    shapes = param_shapes(config)
    total = sum(int(np.prod(s)) for s in shapes.values())
    blob = data[16 + meta_len :]
    if len(blob) != 8 * total:
        raise CheckpointError(
            f"{path}: weight blob has {len(blob)} bytes, expected {8 * total}"
        )
    if norm_mean.shape != (config.input_mels,) or norm_std.shape != (config.input_mels,):
        raise CheckpointError(f"{path}: normalization stats do not match config")

    flat = np.frombuffer(blob, dtype="<f8")
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in shapes.items():
        size = int(np.prod(shape))
        arrays[name] = flat[offset : offset + size].reshape(shape).copy()
        offset += size
    return FcnParameters(
        config=config, arrays=arrays, norm_mean=norm_mean, norm_std=norm_std,
        vocabulary=vocabulary,
    )
