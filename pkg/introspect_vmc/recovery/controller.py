"""
The monitored control loop.

Each tick samples the policy, appends the scalar uncertainty to the sliding
window and checks the recovery gate. When the gate fires, the recovery
interval doubles and the activation tick is stored before the recovery
behaviour runs; otherwise the Monte-Carlo mean action is executed and queued
for backtracking. With recovery disabled the loop is the plain Monte-Carlo
rollout.
"""

import csv
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

from introspect_vmc.env.types import EpisodeRecord, Task
from introspect_vmc.exceptions import ConfigurationError
from introspect_vmc.foresight.model import ForesightModel
from introspect_vmc.policy.model import PolicyModel
from introspect_vmc.policy.rollout import RolloutContext, episode_noise_root
from introspect_vmc.recovery.config import ControllerConfig, RecoveryMode
from introspect_vmc.recovery.modes import RecoveryOutcome, recover_init, recover_min_unc, recover_rand
from introspect_vmc.recovery.state import BacktrackEntry, ControllerState, backtrack, should_recover
from introspect_vmc.utils.seeding import PURPOSE_RECOVERY, derive_rng

logger = logging.getLogger(__name__)

__all__ = [
    "BacktrackEntry",
    "ControllerState",
    "RecoveryEvent",
    "backtrack",
    "read_recovery_log",
    "run_episode",
    "should_recover",
    "write_recovery_log",
]


@dataclass
class RecoveryEvent:
    episode_id: int
    activation_index: int
    tick: int
    mode: str
    window_sum: float
    window_sum_post: float
    C: float
    T_recovery_at_gate: int
    backtrack_target_tick: Optional[int]
    end_tick: int


def _recover(
    cs: ControllerState,
    foresight: Optional[ForesightModel],
    cfg: ControllerConfig,
    seed: int,
    scene_seed: int,
) -> RecoveryOutcome:
    if cfg.mode == RecoveryMode.MIN_UNC:
        return recover_min_unc(cs, foresight, cfg)
    rng = derive_rng(seed, PURPOSE_RECOVERY, scene_seed, cs.activations)
    if cfg.mode == RecoveryMode.RAND:
        return recover_rand(cs, cfg, rng)
    return recover_init(cs, cfg, rng)


def run_episode(
    policy: PolicyModel,
    foresight: Optional[ForesightModel],
    task: Task,
    scene_seed: int,
    cfg: ControllerConfig,
    seed: int = 0,
    episode_id: int = 0,
) -> Tuple[EpisodeRecord, List[RecoveryEvent]]:
    if cfg.mode == RecoveryMode.MIN_UNC and foresight is None:
        raise ConfigurationError("Minimum-uncertainty recovery needs a trained foresight model")

    ctx = RolloutContext(policy, task, scene_seed, episode_id, episode_noise_root(seed, scene_seed))
    cs = ControllerState.start(ctx, cfg)
    events: List[RecoveryEvent] = []

    while not cs.done(cfg.max_steps):
        tick = ctx.tick
        action, u, _, _ = ctx.mc_decision(cfg.samples, cfg.lam, cfg.metric)
        cs.trace.append(u)
        if should_recover(cs, cfg):
            pre = cs.trace.window_sum()
            t_at_gate = cs.t_recovery
            cs.t_recovery *= 2
            cs.last_recovery_tick = tick
            cs.activations += 1
            outcome = _recover(cs, foresight, cfg, seed, scene_seed)
            event = RecoveryEvent(
                episode_id=episode_id,
                activation_index=cs.activations,
                tick=tick,
                mode=cfg.mode.value,
                window_sum=pre,
                window_sum_post=cs.trace.window_sum(),
                C=cfg.threshold,
                T_recovery_at_gate=t_at_gate,
                backtrack_target_tick=outcome.backtrack_target_tick,
                end_tick=ctx.tick,
            )
            events.append(event)
            logger.debug(
                "Episode %d recovery #%d (%s) at tick %d: window %.6g > C=%.6g, T=%d",
                episode_id, event.activation_index, event.mode, tick, pre, cfg.threshold, t_at_gate,
            )
            continue
        applied = ctx.execute(action, u)
        cs.push(tick, applied, u)

    return ctx.finish(), events


RECOVERY_LOG_FIELDS = [f.name for f in fields(RecoveryEvent)]


def write_recovery_log(path: Union[str, Path], events: Iterable[RecoveryEvent]) -> Path:
    """CSV log ordered by episode id then activation index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(events, key=lambda e: (e.episode_id, e.activation_index))
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=RECOVERY_LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        for event in ordered:
            row = asdict(event)
            row["window_sum"] = repr(event.window_sum)
            row["window_sum_post"] = repr(event.window_sum_post)
            row["C"] = repr(event.C)
            row["backtrack_target_tick"] = "" if event.backtrack_target_tick is None else event.backtrack_target_tick
            writer.writerow(row)
    return path


def read_recovery_log(path: Union[str, Path]) -> List[RecoveryEvent]:
    with open(path, encoding="utf-8", newline="") as handle:
        return [
            RecoveryEvent(
                episode_id=int(row["episode_id"]),
                activation_index=int(row["activation_index"]),
                tick=int(row["tick"]),
                mode=row["mode"],
                window_sum=float(row["window_sum"]),
                window_sum_post=float(row["window_sum_post"]),
                C=float(row["C"]),
                T_recovery_at_gate=int(row["T_recovery_at_gate"]),
                backtrack_target_tick=int(row["backtrack_target_tick"]) if row["backtrack_target_tick"] else None,
                end_tick=int(row["end_tick"]),
            )
            for row in csv.DictReader(handle)
        ]
