"""
Runtime state of the monitored controller: the backtrack queue, the
uncertainty trace and the backoff-gated recovery interval.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional

import numpy as np

from introspect_vmc.env.types import ActionCommand, Gripper, Vec3
from introspect_vmc.nn.layers import LstmMemory
from introspect_vmc.policy.rollout import RolloutContext
from introspect_vmc.recovery.config import ControllerConfig
from introspect_vmc.uncertainty.window import UncertaintyTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BacktrackEntry:
    """One executed Monte-Carlo tick: the pose reached, the displacement applied and the memory after it."""

    tick: int
    ee_pos: Vec3
    applied_delta: Vec3
    mem: LstmMemory
    uncertainty: float


@dataclass
class ControllerState:
    ctx: RolloutContext
    fifo: Deque[BacktrackEntry]
    trace: UncertaintyTrace
    t_recovery: int
    last_recovery_tick: int = 0
    activations: int = 0
    replayed: int = 0

    @classmethod
    def start(cls, ctx: RolloutContext, cfg: ControllerConfig) -> "ControllerState":
        return cls(
            ctx=ctx,
            fifo=deque(maxlen=cfg.backtrack_depth),
            trace=UncertaintyTrace(cfg.window),
            t_recovery=cfg.t_recovery_init,
        )

    @property
    def tick(self) -> int:
        return self.ctx.tick

    @property
    def mem(self) -> LstmMemory:
        return self.ctx.mem

    def done(self, max_steps: int) -> bool:
        return self.ctx.tick >= max_steps or self.ctx.success

    def push(self, tick: int, applied: np.ndarray, uncertainty: float) -> BacktrackEntry:
        entry = BacktrackEntry(
            tick=tick,
            ee_pos=self.ctx.state.ee_pos,
            applied_delta=Vec3.of(applied),
            mem=self.ctx.mem.copy(),
            uncertainty=float(uncertainty),
        )
        self.fifo.append(entry)
        return entry


def should_recover(cs: ControllerState, cfg: ControllerConfig) -> bool:
    """Both conditions are strict: more than ``T_recovery`` ticks since the last activation and window sum above ``C``."""
    if not cfg.enabled or len(cs.trace) == 0:
        return False
    if cs.tick - cs.last_recovery_tick <= cs.t_recovery:
        return False
    return cs.trace.window_sum() > cfg.threshold


def backtrack(cs: ControllerState, max_steps: Optional[int] = None) -> Optional[int]:
    """
    Return to the queued tick with the lowest uncertainty (earliest on ties).

    Newer entries are undone newest first by commanding their negated applied
    displacement with the gripper held. Objects moved by contact do not follow.
    The memory stored with the chosen entry is restored, newer entries are
    dropped and the frame buffer is refilled. Returns the chosen tick, or
    ``None`` when the queue is empty.
    """
    if not cs.fifo:
        logger.warning("Backtrack requested with an empty queue at tick %d", cs.tick)
        return None
    entries = list(cs.fifo)
    target = min(range(len(entries)), key=lambda i: (entries[i].uncertainty, i))
    for entry in reversed(entries[target + 1:]):
        if max_steps is not None and cs.done(max_steps):
            break
        cs.ctx.execute(ActionCommand(Vec3.of(-np.asarray(entry.applied_delta)), Gripper.NOOP))
        cs.replayed += 1
    chosen = entries[target]
    cs.ctx.mem = chosen.mem.copy()
    while len(cs.fifo) > target + 1:
        cs.fifo.pop()
    cs.ctx.refill_buffer()
    logger.debug("Backtracked to tick %d (u=%.6g), now at tick %d", chosen.tick, chosen.uncertainty, cs.tick)
    return chosen.tick
