"""
Value types shared by the tabletop simulator, the policy and the harness.

Positions are ``Vec3`` named tuples so states compare and hash by value;
computations convert them with ``np.asarray``.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np


class Task(str, Enum):
    PUSHING = "pushing"
    PICK_PLACE = "pick_place"
    PICK_REACH = "pick_reach"


class Gripper(IntEnum):
    """Gripper command classes; the value is the class index of the gripper head."""

    OPEN = 0
    CLOSE = 1
    NOOP = 2


class ObservationMode(str, Enum):
    ORACLE_STATE = "oracle"
    GRID_IMAGE = "grid"


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, values) -> "Vec3":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


ZERO = Vec3(0.0, 0.0, 0.0)

STAGE_NAMES: Dict[Task, Tuple[str, ...]] = {
    Task.PUSHING: ("reach", "push"),
    Task.PICK_PLACE: ("reach", "pick", "place"),
    Task.PICK_REACH: ("reach", "pick", "task"),
}


@dataclass(frozen=True)
class EnvState:
    task: Task
    ee_pos: Vec3
    gripper_open: float
    object_pos: Vec3
    target_pos: Vec3
    object_yaw: float = 0.0
    attached: bool = False
    tick: int = 0
    stick_grasp_offset: Vec3 = ZERO

    @property
    def grasp_point(self) -> np.ndarray:
        return np.asarray(self.object_pos) + np.asarray(self.stick_grasp_offset)

    @property
    def stick_far_end(self) -> np.ndarray:
        return np.asarray(self.object_pos) - np.asarray(self.stick_grasp_offset)


@dataclass(frozen=True)
class ActionCommand:
    delta_ee: Vec3
    gripper: Gripper = Gripper.NOOP

    @classmethod
    def of(cls, delta, gripper: Gripper = Gripper.NOOP) -> "ActionCommand":
        return cls(Vec3.of(delta), Gripper(gripper))


@dataclass(frozen=True, eq=False)
class Observation:
    mode: ObservationMode
    grid: Optional[np.ndarray] = None
    state_vec: Optional[np.ndarray] = None

    def as_array(self) -> np.ndarray:
        return self.grid if self.mode == ObservationMode.GRID_IMAGE else self.state_vec

    def equals(self, other: "Observation") -> bool:
        return self.mode == other.mode and np.array_equal(self.as_array(), other.as_array())


@dataclass(frozen=True)
class ProprioState:
    ee_pos: Vec3
    gripper_open: float

    @classmethod
    def from_state(cls, state: EnvState) -> "ProprioState":
        return cls(state.ee_pos, state.gripper_open)

    def as_array(self) -> np.ndarray:
        return np.array([*self.ee_pos, self.gripper_open], dtype=np.float64)


@dataclass(frozen=True)
class StageFlags:
    """Per-task stage successes; a later stage always implies the earlier ones."""

    task: Task
    values: Tuple[bool, ...]

    @classmethod
    def empty(cls, task: Task) -> "StageFlags":
        return cls(task, tuple(False for _ in STAGE_NAMES[task]))

    @property
    def names(self) -> Tuple[str, ...]:
        return STAGE_NAMES[self.task]

    @property
    def success(self) -> bool:
        return self.values[-1]

    def as_dict(self) -> Dict[str, bool]:
        return dict(zip(self.names, self.values))


@dataclass
class EpisodeStep:
    observation: Observation
    proprio: ProprioState
    action: ActionCommand
    q_obj: Vec3
    q_ee: Vec3
    uncertainty: Optional[float] = None


@dataclass
class EpisodeRecord:
    """
    Trace of one rollout.

    ``states[i]`` is the state before ``steps[i]`` and the final entry is the
    terminal state, so simulated records hold ``len(steps) + 1`` states.
    Records read back from a dataset file carry no states.
    """

    task: Task
    scene_seed: int
    episode_id: int = 0
    steps: List[EpisodeStep] = field(default_factory=list)
    states: List[EnvState] = field(default_factory=list)
    stage_flags: Optional[StageFlags] = None
    terminal_tick: Optional[int] = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def success(self) -> bool:
        return bool(self.stage_flags is not None and self.stage_flags.success)

    @property
    def uncertainties(self) -> List[Optional[float]]:
        return [step.uncertainty for step in self.steps]
