"""
Expert demonstration generation and the line-delimited dataset format.

A dataset file is JSON lines: one header object, then for every episode one
object per tick followed by a summary object carrying the stage flags. Keys
are sorted and separators fixed so equal datasets produce identical bytes.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from introspect_vmc.env import simulator
from introspect_vmc.env.experts import WaypointExpert
from introspect_vmc.env.metrics import StageTracker
from introspect_vmc.env.types import (
    ActionCommand,
    EpisodeRecord,
    EpisodeStep,
    Gripper,
    Observation,
    ObservationMode,
    ProprioState,
    StageFlags,
    Task,
    Vec3,
)
from introspect_vmc.exceptions import ConfigurationError, DatasetError, ExpertFailureError
from introspect_vmc.utils import parallel_map

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_HORIZON = 60
MIN_EXPERT_SUCCESS_RATE = 0.9
MIN_ATTEMPTS_BEFORE_ABORT = 20

GRID_SHAPE = (3, simulator.GRID_SIZE, simulator.GRID_SIZE)


@dataclass
class DemoDataset:
    header: Dict[str, Any]
    records: List[EpisodeRecord] = field(default_factory=list)

    @property
    def task(self) -> Task:
        return Task(self.header["task"])

    @property
    def obs_mode(self) -> ObservationMode:
        return ObservationMode(self.header["obs_mode"])

    @property
    def horizon(self) -> int:
        return int(self.header["H"])

    @property
    def total_ticks(self) -> int:
        return sum(len(record) for record in self.records)

    def __len__(self) -> int:
        return len(self.records)


def make_step(state, action: ActionCommand, mode: ObservationMode) -> EpisodeStep:
    return EpisodeStep(
        observation=simulator.observe(state, mode),
        proprio=ProprioState.from_state(state),
        action=action,
        q_obj=state.object_pos,
        q_ee=state.ee_pos,
    )


def run_expert_episode(
    task: Task,
    scene_seed: int,
    mode: ObservationMode = ObservationMode.GRID_IMAGE,
    horizon: int = DEFAULT_HORIZON,
    episode_id: int = 0,
) -> EpisodeRecord:
    """Roll the scripted expert for at most ``horizon`` ticks, stopping on success."""
    task = Task(task)
    state = simulator.reset(task, scene_seed)
    expert = WaypointExpert(task)
    tracker = StageTracker(task)
    tracker.update(state)
    record = EpisodeRecord(task=task, scene_seed=scene_seed, episode_id=episode_id, states=[state])

    while len(record) < horizon and not tracker.success:
        action = expert.expert_action(state)
        record.steps.append(make_step(state, action, mode))
        state = simulator.step(state, action)
        record.states.append(state)
        tracker.update(state)

    record.stage_flags = tracker.flags
    record.terminal_tick = state.tick
    return record


def _attempt(args: Tuple[Task, int, ObservationMode, int]) -> Tuple[Optional[EpisodeRecord], str]:
    task, scene_seed, mode, horizon = args
    try:
        record = run_expert_episode(task, scene_seed, mode, horizon)
    except ExpertFailureError as exc:
        return None, str(exc)
    if not record.success:
        return None, f"flags {record.stage_flags.as_dict()} after {len(record)} ticks"
    return record, ""


def generate_demos(
    task: Task,
    count: int,
    base_seed: int,
    mode: ObservationMode = ObservationMode.GRID_IMAGE,
    horizon: int = DEFAULT_HORIZON,
    workers: int = 1,
) -> DemoDataset:
    """
    Collect ``count`` fully successful expert episodes on scene seeds
    ``base_seed, base_seed + 1, ...``.

    Raises ExpertFailureError once at least MIN_ATTEMPTS_BEFORE_ABORT scenes
    have been tried and the expert success rate is below 90%.
    """
    task = Task(task)
    mode = ObservationMode(mode)
    if count <= 0:
        raise ConfigurationError("Demonstration count must be positive")
    if horizon <= 0:
        raise ConfigurationError("Episode horizon must be positive")

    records: List[EpisodeRecord] = []
    failures: List[Tuple[int, str]] = []
    attempts = 0
    next_seed = base_seed

    while len(records) < count:
        chunk = max(count - len(records), workers)
        seeds = list(range(next_seed, next_seed + chunk))
        next_seed += chunk
        results = parallel_map(_attempt, [(task, s, mode, horizon) for s in seeds], workers)

        for seed, (record, reason) in zip(seeds, results):
            attempts += 1
            if record is None:
                failures.append((seed, reason))
                logger.warning("Expert failed on %s scene %d: %s", task.value, seed, reason)
            else:
                record.episode_id = len(records)
                records.append(record)

            rate = 1.0 - len(failures) / attempts
            if attempts >= MIN_ATTEMPTS_BEFORE_ABORT and rate < MIN_EXPERT_SUCCESS_RATE:
                logger.error("Expert success rate %.3f over %d attempts", rate, attempts)
                raise ExpertFailureError(
                    f"Expert success rate {rate:.1%} below {MIN_EXPERT_SUCCESS_RATE:.0%} "
                    f"after {attempts} attempts; first failures: {failures[:5]}"
                )
            if len(records) == count:
                break

    logger.info(
        "Generated %d %s demonstrations in %d attempts (%d failures)",
        count, task.value, attempts, len(failures),
    )
    header = {
        "type": "header",
        "format_version": FORMAT_VERSION,
        "task": task.value,
        "H": horizon,
        "obs_mode": mode.value,
        "spawn_grid": simulator.spawn_grid_spec(),
        "base_seed": base_seed,
        "count": count,
    }
    return DemoDataset(header=header, records=records)


def _round6(values: np.ndarray) -> List[float]:
    return [float(f"{v:.6g}") for v in np.asarray(values, dtype=np.float64).ravel()]


def _floats(values) -> List[float]:
    return [float(v) for v in values]


def _dump(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def iter_dataset_lines(dataset: DemoDataset) -> Iterator[str]:
    yield _dump(dataset.header)
    mode = dataset.obs_mode
    for record in dataset.records:
        for t, step in enumerate(record.steps):
            line: Dict[str, Any] = {
                "type": "step",
                "episode_id": record.episode_id,
                "t": t,
                "task": record.task.value,
                "obs_mode": mode.value,
                "proprio": _floats(step.proprio.as_array()),
                "action": _floats(step.action.delta_ee),
                "gripper": step.action.gripper.name.lower(),
                "q_obj": _floats(step.q_obj),
                "q_ee": _floats(step.q_ee),
            }
            if mode == ObservationMode.GRID_IMAGE:
                line["grid"] = _round6(step.observation.grid)
            else:
                line["state_vec"] = _floats(step.observation.state_vec)
            yield _dump(line)
        yield _dump(
            {
                "type": "summary",
                "episode_id": record.episode_id,
                "scene_seed": record.scene_seed,
                "stage_flags": record.stage_flags.as_dict() if record.stage_flags else {},
                "terminal_tick": record.terminal_tick,
                "length": len(record),
            }
        )


def dumps_dataset(dataset: DemoDataset) -> str:
    return "\n".join(iter_dataset_lines(dataset)) + "\n"


def write_dataset(path: Union[str, Path], dataset: DemoDataset) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in iter_dataset_lines(dataset):
            handle.write(line + "\n")
    logger.info("Wrote %d episodes (%d ticks) to %s", len(dataset), dataset.total_ticks, path)
    return path


def _require(obj: Dict[str, Any], keys, where: str) -> None:
    missing = [k for k in keys if k not in obj]
    if missing:
        raise DatasetError(f"{where} is missing fields {missing}")


STEP_FIELDS = ("episode_id", "t", "proprio", "action", "gripper", "q_obj", "q_ee")


def _parse_step(obj: Dict[str, Any], mode: ObservationMode, lineno: int) -> EpisodeStep:
    _require(obj, STEP_FIELDS, f"Line {lineno}")
    if mode == ObservationMode.GRID_IMAGE:
        _require(obj, ("grid",), f"Line {lineno}")
        grid = np.asarray(obj["grid"], dtype=np.float64)
        if grid.size != int(np.prod(GRID_SHAPE)):
            raise DatasetError(f"Line {lineno}: grid has {grid.size} values")
        observation = Observation(mode=mode, grid=grid.reshape(GRID_SHAPE))
    else:
        _require(obj, ("state_vec",), f"Line {lineno}")
        observation = Observation(mode=mode, state_vec=np.asarray(obj["state_vec"], dtype=np.float64))

    proprio = np.asarray(obj["proprio"], dtype=np.float64)
    if proprio.shape != (4,):
        raise DatasetError(f"Line {lineno}: proprio must hold 4 values")
    try:
        gripper = Gripper[str(obj["gripper"]).upper()]
    except KeyError as exc:
        raise DatasetError(f"Line {lineno}: unknown gripper class {obj['gripper']!r}") from exc
    return EpisodeStep(
        observation=observation,
        proprio=ProprioState(Vec3.of(proprio[:3]), float(proprio[3])),
        action=ActionCommand(Vec3.of(obj["action"]), gripper),
        q_obj=Vec3.of(obj["q_obj"]),
        q_ee=Vec3.of(obj["q_ee"]),
    )


def loads_dataset(text: str) -> DemoDataset:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise DatasetError("Dataset is empty")
    try:
        objects = [json.loads(line) for line in lines]
    except json.JSONDecodeError as exc:
        raise DatasetError(f"Malformed dataset line: {exc}") from exc

    header = objects[0]
    if header.get("type") != "header":
        raise DatasetError("First line must be the dataset header")
    _require(header, ("format_version", "task", "H", "obs_mode", "count"), "Header")
    if header["format_version"] != FORMAT_VERSION:
        raise DatasetError(f"Unsupported dataset format version {header['format_version']}")
    task = Task(header["task"])
    mode = ObservationMode(header["obs_mode"])

    dataset = DemoDataset(header=header)
    current = EpisodeRecord(task=task, scene_seed=-1)
    for lineno, obj in enumerate(objects[1:], start=2):
        kind = obj.get("type")
        if kind == "step":
            current.steps.append(_parse_step(obj, mode, lineno))
        elif kind == "summary":
            _require(obj, ("episode_id", "scene_seed", "stage_flags"), f"Line {lineno}")
            flags = obj["stage_flags"]
            current.episode_id = int(obj["episode_id"])
            current.scene_seed = int(obj["scene_seed"])
            empty = StageFlags.empty(task)
            current.stage_flags = StageFlags(task, tuple(bool(flags.get(n, False)) for n in empty.names))
            current.terminal_tick = obj.get("terminal_tick")
            dataset.records.append(current)
            current = EpisodeRecord(task=task, scene_seed=-1)
        else:
            raise DatasetError(f"Line {lineno}: unknown record type {kind!r}")

    if current.steps:
        raise DatasetError("Dataset ends inside an episode (missing summary line)")
    if len(dataset.records) != int(header["count"]):
        raise DatasetError(f"Header declares {header['count']} episodes, found {len(dataset.records)}")
    return dataset


def read_dataset(path: Union[str, Path]) -> DemoDataset:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"Dataset file not found: {path}")
    dataset = loads_dataset(path.read_text(encoding="utf-8"))
    logger.info("Read %d %s episodes from %s", len(dataset), dataset.task.value, path)
    return dataset
