"""Recovery controller configuration."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from introspect_vmc.exceptions import ConfigurationError
from introspect_vmc.uncertainty.calibration import METRICS


class RecoveryMode(str, Enum):
    NONE = "none"
    MIN_UNC = "min_unc"
    RAND = "rand"
    INIT = "init"


@dataclass(frozen=True)
class ControllerConfig:
    """
    Parameters of the monitored control loop.

    ``threshold`` is the window-sum level ``C`` above which recovery may fire;
    ``math.inf`` never fires. ``t_recovery_init`` is the minimum number of ticks
    between activations before any backoff doubling.
    """

    samples: int = 50
    threshold: float = math.inf
    window: int = 20
    t_recovery_init: int = 40
    backtrack_depth: int = 20
    recovery_steps: int = 25
    mode: RecoveryMode = RecoveryMode.NONE
    max_steps: int = 120
    lam: float = 0.3
    metric: str = "trace"
    init_center: Tuple[float, float, float] = (0.5, 0.5, 0.2)
    init_radius: float = 0.08

    def __post_init__(self):
        object.__setattr__(self, "mode", RecoveryMode(self.mode))
        object.__setattr__(self, "init_center", tuple(float(v) for v in self.init_center))
        if self.samples < 2:
            raise ConfigurationError("The controller needs at least 2 samples per tick")
        if min(self.window, self.t_recovery_init, self.backtrack_depth, self.max_steps) < 1:
            raise ConfigurationError("window, t_recovery_init, backtrack_depth and max_steps must be positive")
        if self.recovery_steps < 0:
            raise ConfigurationError("recovery_steps cannot be negative")
        if math.isnan(self.threshold):
            raise ConfigurationError("threshold must be a number or inf")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError("lam must lie in [0, 1]")
        if self.metric not in METRICS:
            raise ConfigurationError(f"Unknown uncertainty metric {self.metric!r}")
        if len(self.init_center) != 3 or self.init_radius <= 0:
            raise ConfigurationError("init_center is a 3-vector and init_radius must be positive")

    @property
    def enabled(self) -> bool:
        return self.mode != RecoveryMode.NONE
