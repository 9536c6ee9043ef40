"""
Introspect VMC - introspective visuomotor control with Monte-Carlo dropout.

This package trains a Bayesian visuomotor policy by behavioral cloning on a
planar tabletop simulator, monitors its epistemic uncertainty online and
recovers from predicted failures by backtracking and following the action of
minimum predicted uncertainty.
"""

__version__ = "0.3.0"

from .exceptions import (
    ArtifactChainError,
    CheckpointError,
    ConfigurationError,
    DatasetError,
    DimensionError,
    ExpertFailureError,
    InsufficientSamplesError,
    IntrospectVMCError,
    InvalidNoiseError,
    NonFiniteError,
    TrainingDivergedError,
)
from .policy import PolicyConfig, PolicyModel, train_policy
from .recovery import ControllerConfig, RecoveryMode, run_episode

__all__ = [
    "PolicyConfig",
    "PolicyModel",
    "train_policy",
    "ControllerConfig",
    "RecoveryMode",
    "run_episode",
    "IntrospectVMCError",
    "DimensionError",
    "NonFiniteError",
    "InvalidNoiseError",
    "ConfigurationError",
    "CheckpointError",
    "DatasetError",
    "ExpertFailureError",
    "TrainingDivergedError",
    "InsufficientSamplesError",
    "ArtifactChainError",
]
