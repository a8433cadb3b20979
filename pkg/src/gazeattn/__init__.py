"""Gaze-guided spatio-temporal attention for video gesture recognition.

A desk-scale, numpy implementation: inflated-3D convolutional backbone with
an attention block supervised by human gaze heatmaps, JIGSAWS-style dataset
tooling with a synthetic surrogate generator, leave-one-user-out training
and segmentation metrics. Hot kernels run under numba with a pure-numpy
fallback (see gazeattn.backend).
"""

__version__ = "0.1.0"

from .backend import active_backend, set_backend
from .backbone import BackboneConfig, inflate_2d
from .errors import (
    ConfigError,
    GazeAttnError,
    ParseError,
    ShapeError,
    TrainingDivergedError,
    UndefinedMetricError,
    ValidationError,
)
from .synth import SynthConfig, synth_generate
from .training import TrainConfig, train
from .trials import Clip, ClipSet, GazeTrack, Trial, load_dataset, louo_folds

__all__ = [
    "BackboneConfig",
    "Clip",
    "ClipSet",
    "ConfigError",
    "GazeAttnError",
    "GazeTrack",
    "ParseError",
    "ShapeError",
    "SynthConfig",
    "TrainConfig",
    "Trial",
    "TrainingDivergedError",
    "UndefinedMetricError",
    "ValidationError",
    "active_backend",
    "inflate_2d",
    "load_dataset",
    "louo_folds",
    "set_backend",
    "synth_generate",
    "train",
    "__version__",
]
