"""The three recovery behaviours run after the gate fires."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from introspect_vmc.env import simulator
from introspect_vmc.env.types import ActionCommand, Gripper, Vec3
from introspect_vmc.foresight.model import ForesightModel
from introspect_vmc.foresight.selection import Selection, min_uncertainty_action
from introspect_vmc.recovery.config import ControllerConfig
from introspect_vmc.recovery.state import ControllerState, backtrack
from introspect_vmc.uncertainty.calibration import uncertainty_from_samples

logger = logging.getLogger(__name__)

ARRIVAL_TOLERANCE = 1e-9


@dataclass
class RecoveryOutcome:
    backtrack_target_tick: Optional[int] = None
    steps: int = 0
    selections: List[Selection] = field(default_factory=list)
    init_target: Optional[Vec3] = None


def recover_min_unc(cs: ControllerState, foresight: ForesightModel, cfg: ControllerConfig) -> RecoveryOutcome:
    """Backtrack, then follow the candidate with the lowest predicted uncertainty for ``recovery_steps`` ticks."""
    ctx = cs.ctx
    outcome = RecoveryOutcome(backtrack_target_tick=backtrack(cs, cfg.max_steps))
    for _ in range(cfg.recovery_steps):
        if cs.done(cfg.max_steps):
            break
        tick = ctx.tick
        selection = min_uncertainty_action(
            ctx.model, foresight, ctx.state_rep(), ctx.mem, cfg.samples, ctx.noise_root, tick
        )
        ctx.mem = selection.memory
        u = uncertainty_from_samples(selection.samples, cfg.lam, cfg.metric)
        cs.trace.append(u)
        applied = ctx.execute(selection.action, u)
        cs.push(tick, applied, u)
        outcome.selections.append(selection)
        outcome.steps += 1
    return outcome


def recover_rand(cs: ControllerState, cfg: ControllerConfig, rng: np.random.Generator) -> RecoveryOutcome:
    """Uniform random displacements with the gripper held, then a memory reset."""
    outcome = RecoveryOutcome()
    for _ in range(cfg.recovery_steps):
        if cs.done(cfg.max_steps):
            break
        delta = rng.uniform(-simulator.MAX_STEP, simulator.MAX_STEP, size=3)
        cs.ctx.execute(ActionCommand(Vec3.of(delta), Gripper.NOOP))
        outcome.steps += 1
    cs.ctx.reset_memory()
    cs.ctx.refill_buffer()
    return outcome


def sample_init_point(rng: np.random.Generator, center, radius: float) -> Vec3:
    """Uniform point in the ball around ``center``, clamped into the workspace."""
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    r = radius * rng.uniform() ** (1.0 / 3.0)
    point = np.asarray(center, dtype=np.float64) + r * direction
    return Vec3.of(np.clip(point, simulator.WORKSPACE_LOW, simulator.WORKSPACE_HIGH))


def recover_init(cs: ControllerState, cfg: ControllerConfig, rng: np.random.Generator) -> RecoveryOutcome:
    """Open the gripper and drive to a random point above the table, then reset memory."""
    target = sample_init_point(rng, cfg.init_center, cfg.init_radius)
    outcome = RecoveryOutcome(init_target=target)
    for _ in range(cfg.recovery_steps):
        if cs.done(cfg.max_steps):
            break
        state = cs.ctx.state
        delta = np.asarray(target) - np.asarray(state.ee_pos)
        if np.max(np.abs(delta)) <= ARRIVAL_TOLERANCE and state.gripper_open >= 1.0:
            break
        cs.ctx.execute(ActionCommand(Vec3.of(simulator.clip_delta(delta)), Gripper.OPEN))
        outcome.steps += 1
    cs.ctx.reset_memory()
    cs.ctx.refill_buffer()
    return outcome
