"""Fully convolutional frame classifier: layers, network, training, checkpoints."""

from .network import (  # noqa: F401
    FcnConfig,
    FcnParameters,
    FramePrediction,
    forward,
    gradients,
    init_params,
    loss,
)
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from .training import train  # noqa: F401
