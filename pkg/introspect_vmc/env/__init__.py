"""
Planar tabletop simulator with pushing, pick-and-place and pick-and-reach
tasks, scripted experts and demonstration datasets.
"""

from .demos import DemoDataset, generate_demos, read_dataset, run_expert_episode, write_dataset
from .experts import WaypointExpert, expert_action
from .metrics import StageTracker, success_metrics
from .simulator import MAX_STEP, observe, reset, step
from .types import (
    ActionCommand,
    EnvState,
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

__all__ = [
    "ActionCommand",
    "DemoDataset",
    "EnvState",
    "EpisodeRecord",
    "EpisodeStep",
    "Gripper",
    "MAX_STEP",
    "Observation",
    "ObservationMode",
    "ProprioState",
    "StageFlags",
    "StageTracker",
    "Task",
    "Vec3",
    "WaypointExpert",
    "expert_action",
    "generate_demos",
    "observe",
    "read_dataset",
    "reset",
    "run_expert_episode",
    "step",
    "success_metrics",
    "write_dataset",
]
