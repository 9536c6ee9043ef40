"""
Calibrated action transform, scalar uncertainty and the Monte-Carlo mean action.

The end-effector command is split into a lam-weighted norm and a
(1 - lam)-weighted unit direction before measuring spread, so that small
commands near the object do not under-report uncertainty.
"""

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import softmax

from introspect_vmc.env.types import ActionCommand, Gripper, Vec3
from introspect_vmc.exceptions import ConfigurationError, DimensionError, InsufficientSamplesError

EPS_NORM = 1e-9
METRICS = ("trace", "max_axis_variance")


@dataclass
class ActionSampleSet:
    """S stochastic head outputs drawn at one tick; rows are samples."""

    delta_ee: np.ndarray
    gripper_logits: np.ndarray
    q_obj: Optional[np.ndarray] = None
    q_ee: Optional[np.ndarray] = None
    tick: int = 0

    def __post_init__(self):
        self.delta_ee = np.atleast_2d(np.asarray(self.delta_ee, dtype=np.float64))
        self.gripper_logits = np.atleast_2d(np.asarray(self.gripper_logits, dtype=np.float64))
        if self.delta_ee.shape[-1] != 3 or self.gripper_logits.shape[-1] != 3:
            raise DimensionError("Sample heads must have width 3")
        if self.delta_ee.shape[0] != self.gripper_logits.shape[0]:
            raise DimensionError("Delta and gripper sample counts differ")

    def __len__(self) -> int:
        return self.delta_ee.shape[0]

    @property
    def gripper_probs(self) -> np.ndarray:
        return softmax(self.gripper_logits, axis=-1)


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ConfigurationError(f"lam must lie in [0, 1], got {lam}")


def transform_actions(deltas: np.ndarray, lam: float) -> np.ndarray:
    """Row-wise calibrated vectors ``[lam |u|, (1 - lam) u / |u|]``, shape ``(S, 4)``."""
    _check_lambda(lam)
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    if deltas.shape[-1] != 3:
        raise DimensionError(f"Delta commands have width 3, got {deltas.shape[-1]}")
    norms = np.linalg.norm(deltas, axis=-1)
    out = np.zeros((deltas.shape[0], 4))
    out[:, 0] = lam * norms
    ok = norms >= EPS_NORM
    out[ok, 1:] = (1.0 - lam) * deltas[ok] / norms[ok, None]
    return out


def transform_action(u, lam: float) -> np.ndarray:
    return transform_actions(np.asarray(u, dtype=np.float64)[None], lam)[0]


def covariance_trace(vectors: np.ndarray) -> float:
    """Trace of the unbiased sample covariance of the rows of ``vectors``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[0] < 2:
        raise InsufficientSamplesError("At least two samples are needed for a covariance")
    centered = vectors - vectors.mean(axis=0)
    return float(np.sum(centered * centered) / (vectors.shape[0] - 1))


def max_axis_variance(vectors: np.ndarray) -> float:
    """Largest per-component unbiased variance."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[0] < 2:
        raise InsufficientSamplesError("At least two samples are needed for a variance")
    return float(np.max(np.var(vectors, axis=0, ddof=1)))


def uncertainty_from_samples(
    samples: Union[ActionSampleSet, np.ndarray], lam: float, metric: str = "trace"
) -> float:
    """Scalar uncertainty of the transformed end-effector samples; gripper excluded."""
    deltas = samples.delta_ee if isinstance(samples, ActionSampleSet) else samples
    if metric not in METRICS:
        raise ConfigurationError(f"Unknown uncertainty metric {metric!r}")
    transformed = transform_actions(deltas, lam)
    value = covariance_trace(transformed) if metric == "trace" else max_axis_variance(transformed)
    return max(value, 0.0)


def mean_gripper_class(probs: np.ndarray) -> Gripper:
    """Argmax of the mean of per-sample class probabilities, lowest index on ties."""
    mean = np.atleast_2d(np.asarray(probs, dtype=np.float64)).mean(axis=0)
    return Gripper(int(np.argmax(mean)))


def mean_action(samples: ActionSampleSet) -> ActionCommand:
    if len(samples) < 1:
        raise InsufficientSamplesError("The mean action needs at least one sample")
    delta = samples.delta_ee.mean(axis=0)
    return ActionCommand(Vec3.of(delta), mean_gripper_class(samples.gripper_probs))
