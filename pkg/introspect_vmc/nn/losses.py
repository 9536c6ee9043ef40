"""Imitation objective: three MSE heads plus a categorical cross-entropy head."""

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np
from scipy.special import log_softmax, softmax

from introspect_vmc.exceptions import DimensionError, NonFiniteError

HEAD_NAMES = ("delta_ee", "gripper_logits", "q_obj", "q_ee")
MSE_HEADS = ("delta_ee", "q_obj", "q_ee")


@dataclass(frozen=True)
class LossWeights:
    """Per-term coefficients; the imitation objective weights all terms equally."""

    delta_ee: float = 1.0
    gripper: float = 1.0
    q_obj: float = 1.0
    q_ee: float = 1.0


@dataclass
class LossResult:
    total: float
    terms: Dict[str, float]
    grads: Dict[str, np.ndarray] = field(repr=False)


def mse(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-row mean squared error (mean over vector components)."""
    return np.mean((pred - target) ** 2, axis=-1)


def cross_entropy(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-row categorical cross-entropy against (one-hot) target probabilities."""
    return -np.sum(target * log_softmax(logits, axis=-1), axis=-1)


def imitation_loss(
    preds: Mapping[str, np.ndarray],
    targets: Mapping[str, np.ndarray],
    weights: LossWeights = LossWeights(),
) -> LossResult:
    """
    Total imitation loss averaged over rows.

    ``preds`` holds the four heads keyed by HEAD_NAMES, each ``(B, 3)`` or
    ``(3,)``. ``targets`` uses the same keys except ``gripper`` (one-hot)
    replaces ``gripper_logits``. Gradients are with respect to each head.
    """
    arrays = {}
    for key in HEAD_NAMES:
        if key not in preds:
            raise DimensionError(f"Missing prediction head: {key}")
        arrays[key] = np.atleast_2d(np.asarray(preds[key], dtype=np.float64))
    target_keys = ("delta_ee", "gripper", "q_obj", "q_ee")
    tgt = {}
    for key in target_keys:
        if key not in targets:
            raise DimensionError(f"Missing target: {key}")
        tgt[key] = np.atleast_2d(np.asarray(targets[key], dtype=np.float64))

    for key, value in list(arrays.items()) + list(tgt.items()):
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"Non-finite values in loss input '{key}'")
    for key in MSE_HEADS:
        if arrays[key].shape != tgt[key].shape:
            raise DimensionError(f"Head {key} shape {arrays[key].shape} != target {tgt[key].shape}")
    if arrays["gripper_logits"].shape != tgt["gripper"].shape:
        raise DimensionError("Gripper logits and one-hot target shapes differ")

    rows = arrays["delta_ee"].shape[0]
    coef = {"delta_ee": weights.delta_ee, "q_obj": weights.q_obj, "q_ee": weights.q_ee}
    terms: Dict[str, float] = {}
    grads: Dict[str, np.ndarray] = {}

    for key in MSE_HEADS:
        residual = arrays[key] - tgt[key]
        terms[key] = coef[key] * float(np.mean(mse(arrays[key], tgt[key])))
        grads[key] = coef[key] * 2.0 * residual / (residual.shape[-1] * rows)

    logits, onehot = arrays["gripper_logits"], tgt["gripper"]
    terms["gripper"] = weights.gripper * float(np.mean(cross_entropy(logits, onehot)))
    probs = softmax(logits, axis=-1)
    grads["gripper_logits"] = (
        weights.gripper * (probs * onehot.sum(axis=-1, keepdims=True) - onehot) / rows
    )

    total = float(sum(terms.values()))
    if not np.isfinite(total):
        raise NonFiniteError("Non-finite imitation loss")
    return LossResult(total=total, terms=terms, grads=grads)


def mean_squared_error(pred: np.ndarray, target: np.ndarray) -> LossResult:
    """Scalar-regression MSE used for distillation; gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"Prediction shape {pred.shape} != target {target.shape}")
    residual = pred - target
    total = float(np.mean(residual ** 2))
    if not np.isfinite(total):
        raise NonFiniteError("Non-finite regression loss")
    return LossResult(total=total, terms={"mse": total}, grads={"pred": 2.0 * residual / residual.size})
