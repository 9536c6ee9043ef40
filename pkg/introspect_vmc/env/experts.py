"""
Scripted waypoint experts for the three tabletop tasks.

An expert plans its waypoints once from the first state it sees and then
emits, per tick, a clipped displacement toward the current waypoint plus that
waypoint's gripper command. A waypoint is complete when the end-effector is
within WAYPOINT_TOLERANCE of it and its optional condition holds.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from introspect_vmc.env import simulator
from introspect_vmc.env.types import ActionCommand, EnvState, Gripper, Task, Vec3, ZERO
from introspect_vmc.exceptions import ExpertFailureError

logger = logging.getLogger(__name__)

WAYPOINT_TOLERANCE = 0.01
STALL_LIMIT = 40

HOVER_HEIGHT = 0.08
PUSH_HOVER_HEIGHT = 0.06
PUSH_HEIGHT = 0.02
PUSH_STANDOFF = 0.045
ALIGN_TOLERANCE = 0.005
# center-to-center distance of the end-effector disc resting on a cube face
PUSH_CONTACT = simulator.EE_RADIUS + simulator.CUBE_HALF


@dataclass(frozen=True)
class Waypoint:
    position: Vec3
    gripper: Gripper = Gripper.NOOP
    until: Optional[Callable[[EnvState], bool]] = None
    label: str = ""


def _attached(state: EnvState) -> bool:
    return state.attached


def _released(state: EnvState) -> bool:
    return not state.attached


def plan_pushing(state: EnvState) -> List[Waypoint]:
    """Rectangular two-stage push: first along y, then along x."""
    ox, oy = state.object_pos.x, state.object_pos.y
    tx, ty = state.target_pos.x, state.target_pos.y
    plan: List[Waypoint] = []

    dy = ty - oy
    if abs(dy) > ALIGN_TOLERANCE:
        s = float(np.sign(dy))
        plan += [
            Waypoint(Vec3(ox, oy - s * PUSH_STANDOFF, PUSH_HOVER_HEIGHT), label="behind_y"),
            Waypoint(Vec3(ox, oy - s * PUSH_STANDOFF, PUSH_HEIGHT), label="descend_y"),
            Waypoint(Vec3(ox, ty - s * PUSH_CONTACT, PUSH_HEIGHT), label="push_y"),
            Waypoint(Vec3(ox, ty - s * PUSH_CONTACT, PUSH_HOVER_HEIGHT), label="lift_y"),
        ]

    dx = tx - ox
    if abs(dx) > ALIGN_TOLERANCE:
        s = float(np.sign(dx))
        plan += [
            Waypoint(Vec3(ox - s * PUSH_STANDOFF, ty, PUSH_HOVER_HEIGHT), label="behind_x"),
            Waypoint(Vec3(ox - s * PUSH_STANDOFF, ty, PUSH_HEIGHT), label="descend_x"),
            Waypoint(Vec3(tx - s * PUSH_CONTACT, ty, PUSH_HEIGHT), label="push_x"),
        ]
    return plan


def plan_pick_place(state: EnvState) -> List[Waypoint]:
    ox, oy = state.object_pos.x, state.object_pos.y
    tx, ty = state.target_pos.x, state.target_pos.y
    grasp_z = simulator.REST_Z
    return [
        Waypoint(Vec3(ox, oy, HOVER_HEIGHT), Gripper.OPEN, label="hover"),
        Waypoint(Vec3(ox, oy, grasp_z), Gripper.OPEN, label="descend"),
        Waypoint(Vec3(ox, oy, grasp_z), Gripper.CLOSE, _attached, label="grasp"),
        Waypoint(Vec3(ox, oy, HOVER_HEIGHT), Gripper.CLOSE, label="lift"),
        Waypoint(Vec3(tx, ty, HOVER_HEIGHT), Gripper.CLOSE, label="traverse"),
        Waypoint(Vec3(tx, ty, HOVER_HEIGHT), Gripper.OPEN, _released, label="release"),
    ]


def plan_pick_reach(state: EnvState) -> List[Waypoint]:
    """Grasp the stick at its marked end, then carry the far end over the target."""
    gx, gy, gz = (float(v) for v in state.grasp_point)
    offset = np.asarray(state.stick_grasp_offset)
    # far_end = ee - 2 * offset while attached
    reach_x = state.target_pos.x + 2.0 * offset[0]
    reach_y = state.target_pos.y + 2.0 * offset[1]
    return [
        Waypoint(Vec3(gx, gy, HOVER_HEIGHT), Gripper.OPEN, label="hover"),
        Waypoint(Vec3(gx, gy, gz), Gripper.OPEN, label="descend"),
        Waypoint(Vec3(gx, gy, gz), Gripper.CLOSE, _attached, label="grasp"),
        Waypoint(Vec3(gx, gy, HOVER_HEIGHT), Gripper.CLOSE, label="lift"),
        Waypoint(Vec3(reach_x, reach_y, HOVER_HEIGHT), Gripper.CLOSE, label="reach"),
    ]


PLANNERS = {
    Task.PUSHING: plan_pushing,
    Task.PICK_PLACE: plan_pick_place,
    Task.PICK_REACH: plan_pick_reach,
}


class WaypointExpert:
    """Stateful waypoint controller for a single episode."""

    def __init__(self, task: Task, stall_limit: int = STALL_LIMIT):
        self.task = Task(task)
        self.stall_limit = stall_limit
        self.plan: Optional[List[Waypoint]] = None
        self.index = 0
        self.ticks_on_waypoint = 0

    @property
    def finished(self) -> bool:
        return self.plan is not None and self.index >= len(self.plan)

    def _complete(self, waypoint: Waypoint, state: EnvState) -> bool:
        distance = float(np.linalg.norm(np.asarray(state.ee_pos) - np.asarray(waypoint.position)))
        if distance > WAYPOINT_TOLERANCE:
            return False
        return waypoint.until is None or waypoint.until(state)

    def expert_action(self, state: EnvState) -> ActionCommand:
        if state.task != self.task:
            raise ExpertFailureError(f"Expert for {self.task.value} given a {state.task.value} state")
        if self.plan is None:
            self.plan = PLANNERS[self.task](state)

        while not self.finished and self._complete(self.plan[self.index], state):
            logger.debug("Waypoint %s reached at tick %d", self.plan[self.index].label, state.tick)
            self.index += 1
            self.ticks_on_waypoint = 0

        if self.finished:
            return ActionCommand(ZERO, Gripper.NOOP)

        self.ticks_on_waypoint += 1
        waypoint = self.plan[self.index]
        if self.ticks_on_waypoint > self.stall_limit:
            raise ExpertFailureError(
                f"Expert stalled on waypoint '{waypoint.label}' for {self.stall_limit} ticks"
            )
        delta = simulator.clip_delta(np.asarray(waypoint.position) - np.asarray(state.ee_pos))
        return ActionCommand(Vec3.of(delta), waypoint.gripper)


def expert_action(state: EnvState, expert: WaypointExpert) -> ActionCommand:
    return expert.expert_action(state)
