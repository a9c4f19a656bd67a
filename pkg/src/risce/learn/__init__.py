"""Joint phase-allocation and CNN estimator learning."""

from .checkpoint import load_model, save_model
from .layers import BatchNorm, Conv2d, PhaseLayer, WidthResize, phase_backward, phase_forward
from .network import CnnEstimator, PhaseCnnModel, export_phases
from .training import (
    Adam,
    HyperRanges,
    TrainConfig,
    TrainingLog,
    hyper_search,
    train_joint,
    validation_nmse,
)

__all__ = [
    "Adam",
    "BatchNorm",
    "CnnEstimator",
    "Conv2d",
    "HyperRanges",
    "PhaseCnnModel",
    "PhaseLayer",
    "TrainConfig",
    "TrainingLog",
    "WidthResize",
    "export_phases",
    "hyper_search",
    "load_model",
    "phase_backward",
    "phase_forward",
    "save_model",
    "train_joint",
    "validation_nmse",
]
