"""
Stage success flags.

Each flag is chained to the previous one (a stage only counts once every
earlier stage has been reached), which keeps the flags monotone even for odd
contact geometry. Reach and pick are sticky over the episode; push and place
are judged on the current state; the pick-and-reach task flag is sticky.
"""

from typing import Iterable, List

import numpy as np

from introspect_vmc.env.types import EnvState, EpisodeRecord, StageFlags, Task

REACH_RADIUS = 0.04
PICK_HEIGHT = 0.06
TARGET_RADIUS = 0.03


def _xy_distance(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def reached(state: EnvState) -> bool:
    return float(np.linalg.norm(np.asarray(state.ee_pos) - state.grasp_point)) <= REACH_RADIUS


def picked(state: EnvState) -> bool:
    return state.attached and state.object_pos.z > PICK_HEIGHT


def on_target(state: EnvState) -> bool:
    return _xy_distance(state.object_pos, state.target_pos) <= TARGET_RADIUS


def far_end_on_target(state: EnvState) -> bool:
    return state.attached and _xy_distance(state.stick_far_end, state.target_pos) <= TARGET_RADIUS


class StageTracker:
    """Online stage flags updated once per visited state."""

    def __init__(self, task: Task):
        self.task = Task(task)
        self.reach = False
        self.pick = False
        self.final = False

    def update(self, state: EnvState) -> StageFlags:
        self.reach = self.reach or reached(state)
        if self.task == Task.PUSHING:
            self.final = self.reach and on_target(state)
            return self.flags

        self.pick = self.pick or (self.reach and picked(state))
        if self.task == Task.PICK_PLACE:
            self.final = self.pick and on_target(state) and not state.attached
        else:
            self.final = self.final or (self.pick and far_end_on_target(state))
        return self.flags

    @property
    def flags(self) -> StageFlags:
        if self.task == Task.PUSHING:
            return StageFlags(self.task, (self.reach, self.final))
        return StageFlags(self.task, (self.reach, self.pick, self.final))

    @property
    def success(self) -> bool:
        return self.final


def flags_from_states(task: Task, states: Iterable[EnvState]) -> StageFlags:
    tracker = StageTracker(task)
    for state in states:
        tracker.update(state)
    return tracker.flags


def success_metrics(record: EpisodeRecord) -> StageFlags:
    """Recompute stage flags from the raw state trace of ``record``."""
    return flags_from_states(record.task, record.states)


def success_rates(flags: List[StageFlags]) -> List[float]:
    """Per-stage success fraction over a list of same-task flags."""
    if not flags:
        return []
    values = np.array([f.values for f in flags], dtype=np.float64)
    return [float(v) for v in values.mean(axis=0)]
