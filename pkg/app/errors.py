"""Exception hierarchy for the source separation toolkit."""

from typing import Optional


class SeparationError(Exception):
    """Base class for every error raised by the toolkit."""


class SignalError(SeparationError, ValueError):
    """Invalid waveform, spectrogram or WAV file."""


class SubspaceError(SeparationError, ValueError):
    """Invalid input to an SVD or projection routine."""


class ModelError(SeparationError, ValueError):
    """Mask network shape or parameter problem."""


class NonFiniteError(ModelError):
    """A non-finite value appeared inside the network."""

    def __init__(self, message: str, layer: int) -> None:
        super().__init__(f"{message} (layer {layer})")
        self.layer = layer


class TrainingDivergedError(ModelError):
    """The training objective became NaN or infinite."""

    def __init__(self, epoch: int) -> None:
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


class TuningError(SeparationError, ValueError):
    """Invalid hyper-parameter search request."""


class MetricsError(SeparationError, ValueError):
    """Invalid input to the BSS evaluation routines."""


class ContainerError(SeparationError, ValueError):
    """Corrupt or unsupported checkpoint/spectrogram file."""


class ConfigError(SeparationError):
    """Experiment configuration could not be parsed or validated."""


class StageError(SeparationError):
    """Failure inside one stage of an experiment run."""

    def __init__(self, stage: str, cause: Optional[BaseException] = None) -> None:
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"stage '{stage}' failed{detail}")
        self.stage = stage
        self.cause = cause
