"""Uncertainty foresight: distilled next-tick uncertainty prediction and action selection."""

from .distillation import (
    ForesightDataset,
    collect_distillation_data,
    read_foresight_dataset,
    train_foresight,
    write_foresight_dataset,
)
from .model import ForesightModel, action_features, predict_uncertainty
from .selection import Selection, min_uncertainty_action

__all__ = [
    "ForesightDataset",
    "ForesightModel",
    "Selection",
    "action_features",
    "collect_distillation_data",
    "min_uncertainty_action",
    "predict_uncertainty",
    "read_foresight_dataset",
    "train_foresight",
    "write_foresight_dataset",
]
