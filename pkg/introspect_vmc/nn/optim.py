"""Adaptive-moment optimizer over a module's named parameters."""

import logging
from typing import Dict, Iterable, Tuple

import numpy as np

from introspect_vmc.exceptions import DimensionError, NonFiniteError

logger = logging.getLogger(__name__)


class AdamOptimizer:
    """
    Adam with bias correction. State is keyed by parameter path so the same
    optimizer can be reused across calls as long as paths stay stable.
    """

    def __init__(
        self,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}

    def step(self, parameters: Iterable[Tuple[str, np.ndarray, np.ndarray]]) -> None:
        """Update every ``(path, param, grad)`` in place."""
        parameters = list(parameters)
        for path, param, grad in parameters:
            if grad.shape != param.shape:
                raise DimensionError(f"Gradient for {path} has shape {grad.shape}, expected {param.shape}")
            if not np.all(np.isfinite(grad)):
                raise NonFiniteError(f"Non-finite gradient for parameter {path}")

        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t

        for path, param, grad in parameters:
            m = self.first_moment.setdefault(path, np.zeros_like(param))
            v = self.second_moment.setdefault(path, np.zeros_like(param))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
