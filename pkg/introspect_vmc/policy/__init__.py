"""
Bayesian visuomotor policy: architecture and behavioral-cloning training.

Closed-loop rollouts live in ``introspect_vmc.policy.rollout``; they depend on
the uncertainty package, which itself builds on the model defined here.
"""

from .config import PolicyConfig
from .model import HeadOutputs, PolicyModel
from .training import TrainingConfig, TrainingResult, train_policy

__all__ = [
    "HeadOutputs",
    "PolicyConfig",
    "PolicyModel",
    "TrainingConfig",
    "TrainingResult",
    "train_policy",
]
