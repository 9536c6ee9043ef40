"""Monte-Carlo uncertainty, window smoothing and recovery threshold selection."""

from .calibration import (
    ActionSampleSet,
    covariance_trace,
    mean_action,
    transform_action,
    transform_actions,
    uncertainty_from_samples,
)
from .sampling import mc_convergence_curve, mc_sample, mc_timing
from .threshold import ThresholdResult, ValidationRecord, pick_threshold
from .window import UncertaintyTrace, max_window_sum, window_sum

__all__ = [
    "ActionSampleSet",
    "ThresholdResult",
    "UncertaintyTrace",
    "ValidationRecord",
    "covariance_trace",
    "mc_convergence_curve",
    "mc_sample",
    "mc_timing",
    "max_window_sum",
    "mean_action",
    "pick_threshold",
    "transform_action",
    "transform_actions",
    "uncertainty_from_samples",
    "window_sum",
]
