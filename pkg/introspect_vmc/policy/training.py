"""
Behavioral-cloning training of the policy with full-episode BPTT.

Episodes are grouped into batches of ``batch_episodes``; every tick of every
episode in a batch runs through the encoder in one call, the LSTM is unrolled
over the padded batch, and padded ticks are masked out of the loss.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from introspect_vmc.env.demos import DemoDataset
from introspect_vmc.env.types import EpisodeRecord, Gripper
from introspect_vmc.exceptions import (
    ConfigurationError,
    DatasetError,
    NonFiniteError,
    TrainingDivergedError,
)
from introspect_vmc.nn.layers import LstmMemory
from introspect_vmc.nn.losses import LossWeights, imitation_loss
from introspect_vmc.nn.optim import AdamOptimizer
from introspect_vmc.policy.config import PolicyConfig
from introspect_vmc.policy.model import PolicyModel
from introspect_vmc.utils.seeding import PURPOSE_TRAIN, derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 150
    batch_episodes: int = 8
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    loss_weights: LossWeights = LossWeights()

    def __post_init__(self):
        if self.epochs < 1 or self.batch_episodes < 1:
            raise ConfigurationError("epochs and batch_episodes must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must lie in [0, 1)")


@dataclass
class EpisodeArrays:
    """Policy inputs and targets of one demonstration, one row per tick."""

    frames: np.ndarray
    proprio: np.ndarray
    delta_ee: np.ndarray
    gripper: np.ndarray
    q_obj: np.ndarray
    q_ee: np.ndarray

    def __len__(self) -> int:
        return self.proprio.shape[0]


@dataclass
class TrainingResult:
    model: PolicyModel
    curves: List[Dict[str, float]] = field(default_factory=list)
    train_episodes: List[int] = field(default_factory=list)
    val_episodes: List[int] = field(default_factory=list)

    @property
    def final_train_loss(self) -> float:
        return self.curves[-1]["train_loss"]

    @property
    def final_val_loss(self) -> float:
        return self.curves[-1]["val_loss"]


def frame_buffers(observations: Sequence[np.ndarray], frames: int) -> np.ndarray:
    """Per-tick K-frame stacks, front-padded by repeating the first observation."""
    stacked = []
    for t in range(len(observations)):
        window = [observations[max(0, t - frames + 1 + j)] for j in range(frames)]
        stacked.append(np.concatenate(window, axis=0))
    return np.asarray(stacked)


def episode_arrays(record: EpisodeRecord, config: PolicyConfig) -> EpisodeArrays:
    if not record.steps:
        raise DatasetError(f"Episode {record.episode_id} is empty")
    observations = []
    for step in record.steps:
        if step.observation.mode != config.obs_mode:
            raise DatasetError(
                f"Episode {record.episode_id} has {step.observation.mode.value} observations, "
                f"policy expects {config.obs_mode.value}"
            )
        observations.append(np.asarray(step.observation.as_array(), dtype=np.float64))

    onehot = np.zeros((len(record.steps), len(Gripper)))
    for t, step in enumerate(record.steps):
        onehot[t, int(step.action.gripper)] = 1.0
    return EpisodeArrays(
        frames=frame_buffers(observations, config.frames),
        proprio=np.array([s.proprio.as_array() for s in record.steps]),
        delta_ee=np.array([s.action.delta_ee for s in record.steps], dtype=np.float64),
        gripper=onehot,
        q_obj=np.array([s.q_obj for s in record.steps], dtype=np.float64),
        q_ee=np.array([s.q_ee for s in record.steps], dtype=np.float64),
    )


def split_episodes(n: int, val_fraction: float, rng: np.random.Generator) -> Tuple[List[int], List[int]]:
    order = [int(i) for i in rng.permutation(n)]
    n_val = int(round(val_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if val_fraction > 0 and n > 1 else 0), n - 1)
    return sorted(order[n_val:]), sorted(order[:n_val])


class BatchUnroll:
    """Forward and backward passes of the policy over a padded batch of episodes."""

    def __init__(self, model: PolicyModel, episodes: Sequence[EpisodeArrays]):
        self.model = model
        self.batch = len(episodes)
        self.steps = max(len(e) for e in episodes)
        self.mask = np.zeros((self.batch, self.steps), dtype=bool)
        frame_shape = episodes[0].frames.shape[1:]
        self.frames = np.zeros((self.batch, self.steps) + frame_shape)
        self.proprio = np.zeros((self.batch, self.steps, 4))
        self.targets = {k: np.zeros((self.batch, self.steps, 3)) for k in ("delta_ee", "gripper", "q_obj", "q_ee")}
        for b, ep in enumerate(episodes):
            n = len(ep)
            self.mask[b, :n] = True
            self.frames[b, :n] = ep.frames
            self.frames[b, n:] = ep.frames[-1]
            self.proprio[b, :n] = ep.proprio
            self.proprio[b, n:] = ep.proprio[-1]
            for key in self.targets:
                self.targets[key][b, :n] = getattr(ep, key)
        self.valid = self.mask.reshape(-1)

    def run(
        self,
        rng: Optional[np.random.Generator],
        stochastic: bool,
        weights: LossWeights,
        backward: bool,
        include_regularizer: bool = True,
    ) -> float:
        model = self.model
        b, t_max = self.batch, self.steps
        rows = b * t_max
        s, enc_cache = model.encode_batch(
            self.frames.reshape((rows,) + self.frames.shape[2:]), self.proprio.reshape(rows, 4)
        )
        s = s.reshape(b, t_max, -1)

        mem = LstmMemory.zeros(model.config.lstm_width, batch=b)
        hidden = np.zeros((b, t_max, model.config.lstm_width))
        lstm_caches = []
        for t in range(t_max):
            hidden[:, t], mem, cache = model.lstm.step(s[:, t], mem)
            lstm_caches.append(cache)

        noise = model.draw_noise(rng, rows) if stochastic and model.dropout_layers else None
        heads, head_cache = model.head_forward(hidden.reshape(rows, -1), noise, stochastic)

        preds = {name: value[self.valid] for name, value in heads.as_dict().items()}
        targets = {k: v.reshape(rows, 3)[self.valid] for k, v in self.targets.items()}
        result = imitation_loss(preds, targets, weights)
        total = result.total
        if include_regularizer:
            total += model.regularizer()
        if not backward:
            return total

        grads = {}
        for name, grad in result.grads.items():
            full = np.zeros((rows, 3))
            full[self.valid] = grad
            grads[name] = full
        de = model.head_backward(grads, head_cache).reshape(b, t_max, -1)
        if include_regularizer:
            model.regularizer_backward()

        ds = np.zeros_like(s)
        dh_next = np.zeros((b, model.config.lstm_width))
        dc_next = np.zeros((b, model.config.lstm_width))
        for t in reversed(range(t_max)):
            dx, dh_next, dc_next = model.lstm.backward_step(de[:, t] + dh_next, dc_next, lstm_caches[t])
            ds[:, t] = dx
        model.encode_backward(ds.reshape(rows, -1), enc_cache)
        return total


def evaluate_loss(
    model: PolicyModel,
    episodes: Sequence[EpisodeArrays],
    batch_episodes: int = 8,
    weights: LossWeights = LossWeights(),
) -> float:
    """Tick-weighted imitation loss with dropout gates at their expectation."""
    total, ticks = 0.0, 0
    for start in range(0, len(episodes), batch_episodes):
        chunk = episodes[start:start + batch_episodes]
        unroll = BatchUnroll(model, chunk)
        n = int(unroll.valid.sum())
        total += n * unroll.run(None, stochastic=False, weights=weights, backward=False, include_regularizer=False)
        ticks += n
    return total / ticks


def _check_dataset(dataset: DemoDataset, config: PolicyConfig) -> None:
    if len(dataset) == 0:
        raise DatasetError("Cannot train on an empty dataset")
    if dataset.obs_mode != config.obs_mode:
        raise DatasetError(
            f"Dataset observation mode {dataset.obs_mode.value} does not match policy {config.obs_mode.value}"
        )


def train_policy(
    dataset: DemoDataset,
    config: PolicyConfig,
    seed: int,
    training: TrainingConfig = TrainingConfig(),
) -> TrainingResult:
    """Train a fresh policy on ``dataset``; deterministic given ``seed``."""
    _check_dataset(dataset, config)
    arrays = [episode_arrays(record, config) for record in dataset.records]

    split_rng = derive_rng(seed, PURPOSE_TRAIN, 0)
    train_idx, val_idx = split_episodes(len(arrays), training.val_fraction, split_rng)
    if not val_idx:
        logger.warning("No held-out episodes; validation loss is measured on the training set")
        val_idx = list(train_idx)
    train_set = [arrays[i] for i in train_idx]
    val_set = [arrays[i] for i in val_idx]

    model = PolicyModel(config, derive_rng(seed, PURPOSE_TRAIN, 1))
    model.set_dataset_size(sum(len(e) for e in train_set))
    optimizer = AdamOptimizer(lr=training.learning_rate)
    order_rng = derive_rng(seed, PURPOSE_TRAIN, 2)
    noise_rng = derive_rng(seed, PURPOSE_TRAIN, 3)

    result = TrainingResult(model=model, train_episodes=train_idx, val_episodes=val_idx)
    logger.info(
        "Training policy on %d episodes (%d held out), %d parameters",
        len(train_set), len(val_idx), model.parameter_count(),
    )
    for epoch in range(1, training.epochs + 1):
        order = order_rng.permutation(len(train_set))
        losses, weights = [], []
        for start in range(0, len(order), training.batch_episodes):
            batch = [train_set[i] for i in order[start:start + training.batch_episodes]]
            unroll = BatchUnroll(model, batch)
            model.zero_grad()
            try:
                loss = unroll.run(noise_rng, stochastic=True, weights=training.loss_weights, backward=True)
                optimizer.step(model.named_parameters())
            except NonFiniteError as exc:
                logger.error("Training diverged at epoch %d: %s", epoch, exc)
                raise TrainingDivergedError(str(exc), seed, epoch) from exc
            losses.append(loss)
            weights.append(len(batch))

        train_loss = float(np.average(losses, weights=weights))
        try:
            val_loss = evaluate_loss(model, val_set, training.batch_episodes, training.loss_weights)
        except NonFiniteError as exc:
            raise TrainingDivergedError("Validation loss is not finite", seed, epoch) from exc
        if not np.isfinite(val_loss) or not np.isfinite(train_loss):
            raise TrainingDivergedError("Loss is not finite", seed, epoch)

        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss}
        for i, rate in enumerate(model.dropout_rates):
            row[f"p{i}"] = rate
        result.curves.append(row)
        logger.info("Epoch %d train=%.6f val=%.6f p=%s", epoch, train_loss, val_loss, model.dropout_rates)
    return result


def write_curves(path: Union[str, Path], curves: List[Dict[str, float]]) -> Path:
    """One CSV row per epoch: epoch, train_loss, val_loss, then p per dropout layer."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(curves[0].keys()) if curves else ["epoch", "train_loss", "val_loss"]
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in curves:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def read_curves(path: Union[str, Path]) -> List[Dict[str, float]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return [
            {k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(handle)
        ]
