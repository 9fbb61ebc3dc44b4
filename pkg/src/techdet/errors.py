"""Exception hierarchy shared across the toolkit.

Input-side problems (bad files, bad configuration, bad arguments) derive
from InputError; runtime/numerical problems derive from InternalError.
The CLI maps these to exit codes 1 and 2 respectively.
"""


class TechdetError(Exception):
    """Base class for all toolkit errors."""


class InputError(TechdetError):
    """Invalid input: file contents, configuration, or arguments."""


class InternalError(TechdetError):
    """Runtime failure that is not the caller's fault."""


class AudioFormatError(InputError):
    """WAV file is malformed or uses an unsupported encoding/rate."""


class DataError(InputError):
    """Manifest, annotation, or label data violates its contract."""


class ConfigError(InputError):
    """Model or run configuration is inconsistent."""


class CheckpointError(InputError):
    """Checkpoint file is corrupt or has the wrong format/version."""


class TrainingDivergedError(InternalError):
    """Loss became non-finite during training."""
