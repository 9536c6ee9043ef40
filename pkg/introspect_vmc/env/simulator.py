"""
Deterministic planar-tabletop simulator.

The end-effector is a free-flying gripper point over a unit-square table. The
pushing task resolves contact between the end-effector disc and the cube
quasi-statically (no momentum); the picking tasks attach the object rigidly to
the end-effector on a successful close.
"""

import logging
from typing import Dict, Tuple

import numpy as np

from introspect_vmc.env.types import (
    ActionCommand,
    EnvState,
    Gripper,
    Observation,
    ObservationMode,
    Task,
    Vec3,
    ZERO,
)

logger = logging.getLogger(__name__)

WORKSPACE_LOW = np.array([0.0, 0.0, 0.0])
WORKSPACE_HIGH = np.array([1.0, 1.0, 0.3])
HOME_POSE = Vec3(0.5, 0.5, 0.10)

MAX_STEP = 0.02
GRIPPER_SLEW = 0.25
GRASP_RADIUS = 0.025
GRASP_HEIGHT = 0.03

EE_RADIUS = 0.02
PUSH_CONTACT_HEIGHT = 0.03
CUBE_HALF = 0.015
REST_Z = 0.015
STICK_HALF_LENGTH = 0.06

YAW_OFFSET_THRESHOLD = 0.01
YAW_GAIN = 0.1

GRID_ROWS = 6
GRID_COLS = 8
GRID_SIZE = 16
BLOB_RADIUS_CELLS = 1.5

TASK_INDEX = {Task.PUSHING: 0, Task.PICK_PLACE: 1, Task.PICK_REACH: 2}

# (center_x, center_y, spacing) of each 6x8 spawn grid
SPAWN_GRIDS: Dict[str, Tuple[float, float, float]] = {
    "table": (0.5, 0.5, 0.035),
    "stick": (0.35, 0.5, 0.025),
    "reach_target": (0.70, 0.5, 0.025),
}


def spawn_cells(grid: str) -> np.ndarray:
    """Cell centers of a named spawn grid, shape (48, 2), row-major over y then x."""
    cx, cy, spacing = SPAWN_GRIDS[grid]
    xs = cx + (np.arange(GRID_COLS) - (GRID_COLS - 1) / 2.0) * spacing
    ys = cy + (np.arange(GRID_ROWS) - (GRID_ROWS - 1) / 2.0) * spacing
    return np.array([(x, y) for y in ys for x in xs])


def spawn_grid_spec() -> Dict[str, object]:
    return {"rows": GRID_ROWS, "cols": GRID_COLS, "grids": {k: list(v) for k, v in SPAWN_GRIDS.items()}}


def spawn_indices(task: Task, scene_seed: int) -> Tuple[int, int]:
    """Object and target cell indices for a scene."""
    rng = np.random.default_rng([TASK_INDEX[Task(task)], int(scene_seed)])
    n_cells = GRID_ROWS * GRID_COLS
    object_cell = int(rng.integers(n_cells))
    if task == Task.PICK_REACH:
        return object_cell, int(rng.integers(n_cells))
    target_cell = int(rng.integers(n_cells - 1))
    if target_cell >= object_cell:
        target_cell += 1
    return object_cell, target_cell


def reset(task: Task, scene_seed: int) -> EnvState:
    task = Task(task)
    object_cell, target_cell = spawn_indices(task, scene_seed)
    if task == Task.PICK_REACH:
        grasp_xy = spawn_cells("stick")[object_cell]
        target_xy = spawn_cells("reach_target")[target_cell]
        offset = Vec3(-STICK_HALF_LENGTH, 0.0, 0.0)
        object_xy = grasp_xy - np.array([offset.x, offset.y])
    else:
        cells = spawn_cells("table")
        object_xy, target_xy = cells[object_cell], cells[target_cell]
        offset = ZERO

    return EnvState(
        task=task,
        ee_pos=HOME_POSE,
        gripper_open=1.0,
        object_pos=Vec3(float(object_xy[0]), float(object_xy[1]), REST_Z),
        target_pos=Vec3(float(target_xy[0]), float(target_xy[1]), REST_Z),
        object_yaw=0.0,
        attached=False,
        tick=0,
        stick_grasp_offset=offset,
    )


def clip_delta(delta, max_step: float = MAX_STEP) -> np.ndarray:
    delta = np.nan_to_num(np.asarray(delta, dtype=np.float64), nan=0.0, posinf=0.0, neginf=0.0)
    norm = float(np.linalg.norm(delta))
    if norm > max_step:
        delta = delta * (max_step / norm)
    return delta


def _rotation(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s], [s, c]])


def resolve_push(
    ee_xy: np.ndarray, object_xy: np.ndarray, yaw: float, motion_xy: np.ndarray
) -> Tuple[np.ndarray, float]:
    """
    Push the cube out of the end-effector disc.

    Returns the new cube center and yaw. Off-center contact (lateral offset of
    the cube center from the motion line above YAW_OFFSET_THRESHOLD) turns the
    cube, which later deflects pushes.
    """
    local = _rotation(-yaw) @ (ee_xy - object_xy)
    closest = np.clip(local, -CUBE_HALF, CUBE_HALF)
    gap = local - closest
    dist = float(np.hypot(gap[0], gap[1]))

    if dist > 0.0:
        if dist >= EE_RADIUS:
            return object_xy, yaw
        normal_local = gap / dist
        depth = EE_RADIUS - dist
    else:
        axis = int(np.argmax(np.abs(local)))
        normal_local = np.zeros(2)
        normal_local[axis] = 1.0 if local[axis] >= 0 else -1.0
        depth = EE_RADIUS + CUBE_HALF - abs(float(local[axis]))

    normal = _rotation(yaw) @ normal_local
    new_object = object_xy - normal * depth

    motion_norm = float(np.hypot(motion_xy[0], motion_xy[1]))
    if motion_norm > 0.0:
        direction = motion_xy / motion_norm
        rel = object_xy - ee_xy
        offset = direction[0] * rel[1] - direction[1] * rel[0]
        if abs(offset) > YAW_OFFSET_THRESHOLD:
            yaw = yaw + YAW_GAIN * offset * depth / CUBE_HALF ** 2
            yaw = float(np.arctan2(np.sin(yaw), np.cos(yaw)))
    return new_object, yaw


def step(state: EnvState, action: ActionCommand, max_step: float = MAX_STEP) -> EnvState:
    """Advance one tick; a pure function of ``(state, action)``."""
    ee = np.asarray(state.ee_pos)
    delta = clip_delta(action.delta_ee, max_step)
    new_ee = np.clip(ee + delta, WORKSPACE_LOW, WORKSPACE_HIGH)
    applied = new_ee - ee

    if action.gripper == Gripper.OPEN:
        goal = 1.0
    elif action.gripper == Gripper.CLOSE:
        goal = 0.0
    else:
        goal = state.gripper_open
    gripper = state.gripper_open + float(np.clip(goal - state.gripper_open, -GRIPPER_SLEW, GRIPPER_SLEW))

    obj = np.asarray(state.object_pos)
    offset = np.asarray(state.stick_grasp_offset)
    attached = state.attached
    yaw = state.object_yaw

    if state.task == Task.PUSHING:
        if new_ee[2] <= PUSH_CONTACT_HEIGHT:
            new_xy, yaw = resolve_push(new_ee[:2], obj[:2], yaw, applied[:2])
            obj = np.array([new_xy[0], new_xy[1], obj[2]])
    elif attached:
        if action.gripper == Gripper.OPEN:
            attached = False
            obj = np.array([obj[0], obj[1], REST_Z])
        else:
            obj = obj + applied
    elif (
        action.gripper == Gripper.CLOSE
        and state.gripper_open >= 0.5
        and new_ee[2] <= GRASP_HEIGHT
        and np.linalg.norm(new_ee - (obj + offset)) <= GRASP_RADIUS
    ):
        attached = True
        obj = new_ee - offset

    return EnvState(
        task=state.task,
        ee_pos=Vec3.of(new_ee),
        gripper_open=gripper,
        object_pos=Vec3.of(obj),
        target_pos=state.target_pos,
        object_yaw=float(yaw),
        attached=attached,
        tick=state.tick + 1,
        stick_grasp_offset=state.stick_grasp_offset,
    )


def applied_displacement(before: EnvState, after: EnvState) -> np.ndarray:
    return np.asarray(after.ee_pos) - np.asarray(before.ee_pos)


_CELL_CENTERS = (np.arange(GRID_SIZE) + 0.5) / GRID_SIZE


def _axis_weights(coord: float) -> np.ndarray:
    # Overlap of a two-cell-wide footprint with each unit cell: 1.0 within half
    # a cell, linear falloff to 0 at BLOB_RADIUS_CELLS; sums to 2 away from edges.
    distance = np.abs(_CELL_CENTERS - coord) * GRID_SIZE
    return np.clip(BLOB_RADIUS_CELLS - distance, 0.0, 1.0)


def _blob(x: float, y: float) -> np.ndarray:
    return np.outer(_axis_weights(y), _axis_weights(x))


def render_grid(state: EnvState) -> np.ndarray:
    """Three-channel (end-effector, object, target) blob image, shape (3, 16, 16)."""
    grid = np.zeros((3, GRID_SIZE, GRID_SIZE))
    grid[0] = _blob(state.ee_pos.x, state.ee_pos.y)
    if state.task == Task.PICK_REACH:
        near, far = state.grasp_point, state.stick_far_end
        grid[1] = np.maximum(_blob(near[0], near[1]), _blob(far[0], far[1]))
    else:
        grid[1] = _blob(state.object_pos.x, state.object_pos.y)
    grid[2] = _blob(state.target_pos.x, state.target_pos.y)
    return grid


def state_vector(state: EnvState) -> np.ndarray:
    return np.array(
        [*state.ee_pos, state.gripper_open, *state.object_pos, *state.target_pos, state.object_yaw],
        dtype=np.float64,
    )


STATE_VECTOR_WIDTH = 11


def observe(state: EnvState, mode: ObservationMode = ObservationMode.GRID_IMAGE) -> Observation:
    mode = ObservationMode(mode)
    if mode == ObservationMode.GRID_IMAGE:
        return Observation(mode=mode, grid=render_grid(state))
    return Observation(mode=mode, state_vec=state_vector(state))
