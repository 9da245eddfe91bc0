"""Sequence models for learned wrench compensation."""
from .autodiff import NonFiniteError, ShapeError, Tensor, gradcheck, no_grad
from .data import (DegenerateChannel, Standardizer, TooShort, WindowBatch, make_windows,
                   rolling_origin_folds, window_ends)
from .models import KINDS, ModelSpec, SpecMismatch, WeightSet, forward, init_weights, macs, param_count
from .train import (TrainConfig, TrainingDiverged, TrainLog, load_weights, predict_series,
                    predict_wrench, save_weights, train)

__all__ = [
    "NonFiniteError", "ShapeError", "Tensor", "gradcheck", "no_grad",
    "DegenerateChannel", "Standardizer", "TooShort", "WindowBatch", "make_windows",
    "rolling_origin_folds", "window_ends",
    "KINDS", "ModelSpec", "SpecMismatch", "WeightSet", "forward", "init_weights", "macs",
    "param_count",
    "TrainConfig", "TrainingDiverged", "TrainLog", "load_weights", "predict_series",
    "predict_wrench", "save_weights", "train",
]
