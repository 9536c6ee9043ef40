"""Two-layer MLP predicting next-tick uncertainty from an embedding and an action."""

import logging
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import softmax

from introspect_vmc.exceptions import ConfigurationError, DimensionError
from introspect_vmc.nn.checkpoint import load_checkpoint, read_architecture, save_checkpoint
from introspect_vmc.nn.layers import DenseLayer, Module

logger = logging.getLogger(__name__)

ACTION_FEATURE_WIDTH = 6
TRANSFORMS = ("identity", "log1p")


def action_features(delta_ee, gripper_logits) -> np.ndarray:
    """End-effector delta followed by gripper class probabilities; ``(..., 6)``."""
    delta_ee = np.asarray(delta_ee, dtype=np.float64)
    probs = softmax(np.asarray(gripper_logits, dtype=np.float64), axis=-1)
    return np.concatenate([delta_ee, probs], axis=-1)


class ForesightModel(Module):
    """
    ``tanh`` hidden layer then a ``softplus`` output, so predictions are never
    negative. When trained on ``log1p`` targets the prediction is mapped back
    with ``expm1``, which keeps it nonnegative.
    """

    def __init__(
        self,
        embedding_width: int = 64,
        hidden_width: int = 64,
        target_transform: str = "identity",
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        if target_transform not in TRANSFORMS:
            raise ConfigurationError(f"Unknown target transform {target_transform!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.embedding_width = embedding_width
        self.hidden_width = hidden_width
        self.target_transform = target_transform
        self.hidden = DenseLayer(embedding_width + ACTION_FEATURE_WIDTH, hidden_width, "tanh", rng)
        self.output = DenseLayer(hidden_width, 1, "softplus", rng)

    def children(self):
        return [("hidden", self.hidden), ("output", self.output)]

    def architecture(self) -> Dict:
        return {
            "kind": "foresight",
            "embedding_width": self.embedding_width,
            "hidden_width": self.hidden_width,
            "target_transform": self.target_transform,
        }

    def forward(self, inputs: np.ndarray) -> Tuple[np.ndarray, tuple]:
        """Raw (transformed-space) predictions for ``(N, embedding + 6)`` inputs."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if inputs.shape[-1] != self.embedding_width + ACTION_FEATURE_WIDTH:
            raise DimensionError(
                f"Foresight input width {inputs.shape[-1]} != {self.embedding_width + ACTION_FEATURE_WIDTH}"
            )
        h, c1 = self.hidden.forward(inputs)
        out, c2 = self.output.forward(h)
        return out[:, 0], (c1, c2)

    def backward(self, d_out: np.ndarray, cache: tuple) -> None:
        c1, c2 = cache
        dh = self.output.backward(np.asarray(d_out)[:, None], c2)
        self.hidden.backward(dh, c1)

    def inverse_transform(self, raw: np.ndarray) -> np.ndarray:
        return np.expm1(raw) if self.target_transform == "log1p" else raw

    def forward_transform(self, targets: np.ndarray) -> np.ndarray:
        return np.log1p(targets) if self.target_transform == "log1p" else np.asarray(targets, dtype=np.float64)

    def predict_batch(self, embeddings: np.ndarray, features: np.ndarray) -> np.ndarray:
        embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if embeddings.shape[-1] != self.embedding_width:
            raise DimensionError(f"Embedding width {embeddings.shape[-1]} != {self.embedding_width}")
        if features.shape[-1] != ACTION_FEATURE_WIDTH:
            raise DimensionError(f"Action features must have width {ACTION_FEATURE_WIDTH}")
        if embeddings.shape[0] == 1 and features.shape[0] > 1:
            embeddings = np.broadcast_to(embeddings, (features.shape[0], embeddings.shape[1]))
        raw, _ = self.forward(np.concatenate([embeddings, features], axis=-1))
        return self.inverse_transform(raw)

    def predict_uncertainty(self, e_t: np.ndarray, features: np.ndarray) -> float:
        return float(self.predict_batch(e_t, features)[0])

    def save(self, path) -> None:
        save_checkpoint(path, self, self.architecture())

    @classmethod
    def load(cls, path) -> "ForesightModel":
        arch = read_architecture(path)
        if arch.get("kind") != "foresight":
            raise ConfigurationError("Checkpoint does not describe a foresight model")
        model = cls(arch["embedding_width"], arch["hidden_width"], arch["target_transform"])
        load_checkpoint(path, model, model.architecture())
        return model


def predict_uncertainty(model: ForesightModel, e_t: np.ndarray, features: np.ndarray) -> float:
    return model.predict_uncertainty(e_t, features)
