"""
Distillation data collection and training of the foresight model.

Exploration rollouts execute one stochastic policy sample per tick (not the
Monte-Carlo mean) and pair the embedding and executed action at tick ``t``
with the measured uncertainty at ``t + 1``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.stats import skew

from introspect_vmc.env.types import Task
from introspect_vmc.exceptions import (
    DatasetError,
    InsufficientSamplesError,
    NonFiniteError,
    TrainingDivergedError,
)
from introspect_vmc.foresight.model import ACTION_FEATURE_WIDTH, TRANSFORMS, ForesightModel, action_features
from introspect_vmc.foresight.selection import candidate_action
from introspect_vmc.nn.losses import mean_squared_error
from introspect_vmc.nn.optim import AdamOptimizer
from introspect_vmc.policy.model import PolicyModel
from introspect_vmc.policy.rollout import RolloutContext
from introspect_vmc.utils import parallel_map
from introspect_vmc.utils.seeding import PURPOSE_EXPLORE, PURPOSE_SCENE, PURPOSE_TRAIN, derive_rng, derive_seed

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MIN_TRAINING_SAMPLES = 100
SKEW_LIMIT = 5.0


@dataclass
class ForesightDataset:
    header: Dict[str, Any]
    embeddings: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    episode_ids: np.ndarray
    ticks: np.ndarray

    def __len__(self) -> int:
        return int(self.targets.shape[0])


@dataclass
class ForesightTrainingResult:
    model: ForesightModel
    report: Dict[str, float] = field(default_factory=dict)
    curves: List[Dict[str, float]] = field(default_factory=list)


def exploration_scene_seed(seed: int, episode_id: int) -> int:
    return derive_seed(seed, PURPOSE_SCENE, episode_id)


def collect_episode(
    policy: PolicyModel,
    task: Task,
    scene_seed: int,
    noise_root: int,
    samples: int,
    lam: float,
    max_steps: int,
    episode_id: int = 0,
    metric: str = "trace",
) -> Tuple[List[np.ndarray], List[np.ndarray], List[float], List[int]]:
    """One exploration episode of L ticks yielding L - 1 distillation samples."""
    ctx = RolloutContext(policy, task, scene_seed, episode_id, noise_root)
    embeddings, features, targets, ticks = [], [], [], []
    previous = None
    while ctx.tick < max_steps and not ctx.success:
        _, u, sample_set, e_t = ctx.mc_decision(samples, lam, metric)
        if previous is not None:
            embeddings.append(previous[0])
            features.append(previous[1])
            targets.append(u)
            ticks.append(previous[2])
        executed = candidate_action(sample_set, 0)
        feature = action_features(sample_set.delta_ee[0], sample_set.gripper_logits[0])
        previous = (e_t, feature, ctx.tick)
        ctx.execute(executed, u)
    return embeddings, features, targets, ticks


def _collect_worker(args) -> Tuple[int, Tuple]:
    policy, task, seed, episode_id, samples, lam, max_steps, metric = args
    result = collect_episode(
        policy,
        task,
        exploration_scene_seed(seed, episode_id),
        derive_seed(seed, PURPOSE_EXPLORE, episode_id),
        samples,
        lam,
        max_steps,
        episode_id,
        metric,
    )
    return episode_id, result


def collect_distillation_data(
    policy: PolicyModel,
    task: Task,
    n_episodes: int,
    seed: int,
    samples: int = 50,
    lam: Optional[float] = None,
    max_steps: int = 120,
    policy_checksum: str = "",
    workers: int = 1,
    metric: str = "trace",
) -> ForesightDataset:
    task = Task(task)
    lam = policy.config.lam if lam is None else lam
    jobs = [(policy, task, seed, i, samples, lam, max_steps, metric) for i in range(n_episodes)]
    results = parallel_map(_collect_worker, jobs, workers)

    embeddings, features, targets, episode_ids, ticks = [], [], [], [], []
    for episode_id, (e, f, y, t) in sorted(results, key=lambda r: r[0]):
        embeddings.extend(e)
        features.extend(f)
        targets.extend(y)
        ticks.extend(t)
        episode_ids.extend([episode_id] * len(y))

    width = policy.config.lstm_width
    header = {
        "type": "header",
        "format_version": FORMAT_VERSION,
        "task": task.value,
        "policy_checksum": policy_checksum,
        "S": samples,
        "lam": lam,
        "metric": metric,
        "seed": seed,
        "episodes": n_episodes,
        "count": len(targets),
    }
    sk, transform = choose_target_transform(np.asarray(targets, dtype=np.float64))
    header["target_skew"] = sk
    header["target_transform"] = transform
    logger.info("Collected %d distillation samples from %d episodes", len(targets), n_episodes)
    return ForesightDataset(
        header=header,
        embeddings=np.asarray(embeddings, dtype=np.float64).reshape(-1, width),
        features=np.asarray(features, dtype=np.float64).reshape(-1, ACTION_FEATURE_WIDTH),
        targets=np.asarray(targets, dtype=np.float64),
        episode_ids=np.asarray(episode_ids, dtype=np.int64),
        ticks=np.asarray(ticks, dtype=np.int64),
    )


def _dump(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_foresight_dataset(path: Union[str, Path], dataset: ForesightDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(_dump(dataset.header) + "\n")
        for i in range(len(dataset)):
            handle.write(
                _dump(
                    {
                        "episode_id": int(dataset.episode_ids[i]),
                        "t": int(dataset.ticks[i]),
                        "e_t": [float(v) for v in dataset.embeddings[i]],
                        "action": [float(v) for v in dataset.features[i]],
                        "target": float(dataset.targets[i]),
                    }
                )
                + "\n"
            )
    return path


def read_foresight_dataset(path: Union[str, Path]) -> ForesightDataset:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Foresight dataset not found: {path}")
    with open(path, encoding="utf-8") as handle:
        lines = [json.loads(line) for line in handle if line.strip()]
    if not lines or lines[0].get("type") != "header":
        raise DatasetError("Foresight dataset must start with a header line")
    header, rows = lines[0], lines[1:]
    if header.get("format_version") != FORMAT_VERSION:
        raise DatasetError(f"Unsupported foresight dataset version {header.get('format_version')}")
    if len(rows) != header.get("count"):
        raise DatasetError(f"Header declares {header.get('count')} samples, found {len(rows)}")
    try:
        return ForesightDataset(
            header=header,
            embeddings=np.array([r["e_t"] for r in rows], dtype=np.float64).reshape(len(rows), -1),
            features=np.array([r["action"] for r in rows], dtype=np.float64).reshape(len(rows), -1),
            targets=np.array([r["target"] for r in rows], dtype=np.float64),
            episode_ids=np.array([r["episode_id"] for r in rows], dtype=np.int64),
            ticks=np.array([r["t"] for r in rows], dtype=np.int64),
        )
    except KeyError as exc:
        raise DatasetError(f"Foresight sample is missing field {exc}") from exc


def r_squared(pred: np.ndarray, target: np.ndarray) -> float:
    ss_res = float(np.sum((target - pred) ** 2))
    ss_tot = float(np.sum((target - np.mean(target)) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)


def target_skew(targets: np.ndarray) -> float:
    if targets.size == 0 or np.ptp(targets) == 0:
        return 0.0
    value = float(skew(targets))
    return value if np.isfinite(value) else 0.0


def choose_target_transform(targets: np.ndarray) -> Tuple[float, str]:
    """Skew of the targets and the regression target transform it calls for."""
    sk = target_skew(targets)
    return sk, "log1p" if sk > SKEW_LIMIT else "identity"


def train_foresight(
    dataset: ForesightDataset,
    seed: int,
    epochs: int = 200,
    batch_size: int = 64,
    learning_rate: float = 1e-3,
    hidden_width: int = 64,
    holdout_fraction: float = 0.2,
) -> ForesightTrainingResult:
    """Regress the recorded uncertainty; reports held-out MSE and R^2."""
    n = len(dataset)
    if n < MIN_TRAINING_SAMPLES:
        raise InsufficientSamplesError(f"Foresight training needs at least {MIN_TRAINING_SAMPLES} samples, got {n}")
    if np.any(dataset.targets < 0):
        raise DatasetError("Distillation targets must be nonnegative")

    sk, transform = choose_target_transform(dataset.targets)
    transform = dataset.header.get("target_transform", transform)
    if transform not in TRANSFORMS:
        raise DatasetError(f"Unknown foresight target transform '{transform}' in dataset header")
    if transform == "log1p":
        logger.warning("Target skew %.2f exceeds %.1f; training on log1p targets", sk, SKEW_LIMIT)

    rng = derive_rng(seed, PURPOSE_TRAIN, 10)
    order = rng.permutation(n)
    n_hold = max(1, int(round(holdout_fraction * n)))
    hold, train = np.sort(order[:n_hold]), np.sort(order[n_hold:])
    inputs = np.concatenate([dataset.embeddings, dataset.features], axis=1)

    model = ForesightModel(dataset.embeddings.shape[1], hidden_width, transform, derive_rng(seed, PURPOSE_TRAIN, 11))
    targets = model.forward_transform(dataset.targets)
    optimizer = AdamOptimizer(lr=learning_rate)
    result = ForesightTrainingResult(model=model)

    for epoch in range(1, epochs + 1):
        perm = rng.permutation(train)
        total = 0.0
        for start in range(0, len(perm), batch_size):
            idx = perm[start:start + batch_size]
            model.zero_grad()
            try:
                pred, cache = model.forward(inputs[idx])
                loss = mean_squared_error(pred, targets[idx])
                model.backward(loss.grads["pred"], cache)
                optimizer.step(model.named_parameters())
            except NonFiniteError as exc:
                raise TrainingDivergedError(str(exc), seed, epoch) from exc
            total += loss.total * len(idx)
        held_pred, _ = model.forward(inputs[hold])
        held_loss = float(np.mean((held_pred - targets[hold]) ** 2))
        if not np.isfinite(held_loss):
            raise TrainingDivergedError("Held-out foresight loss is not finite", seed, epoch)
        result.curves.append({"epoch": epoch, "train_loss": total / len(train), "heldout_loss": held_loss})

    raw_pred = model.predict_batch(dataset.embeddings[hold], dataset.features[hold])
    train_pred = model.predict_batch(dataset.embeddings[train], dataset.features[train])
    result.report = {
        "samples": n,
        "train_samples": int(len(train)),
        "heldout_samples": int(len(hold)),
        "train_mse": float(np.mean((train_pred - dataset.targets[train]) ** 2)),
        "heldout_mse": float(np.mean((raw_pred - dataset.targets[hold]) ** 2)),
        "heldout_r2": r_squared(raw_pred, dataset.targets[hold]),
        "target_skew": sk,
        "target_transform": transform,
    }
    logger.info(
        "Foresight held-out MSE=%.6g R2=%.3f (%s targets)",
        result.report["heldout_mse"], result.report["heldout_r2"], transform,
    )
    return result
