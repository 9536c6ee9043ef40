"""Uncertainty-gated failure recovery."""

from .config import ControllerConfig, RecoveryMode
from .controller import RecoveryEvent, read_recovery_log, run_episode, write_recovery_log
from .modes import RecoveryOutcome, recover_init, recover_min_unc, recover_rand
from .state import BacktrackEntry, ControllerState, backtrack, should_recover

__all__ = [
    "BacktrackEntry",
    "ControllerConfig",
    "ControllerState",
    "RecoveryEvent",
    "RecoveryMode",
    "RecoveryOutcome",
    "backtrack",
    "read_recovery_log",
    "recover_init",
    "recover_min_unc",
    "recover_rand",
    "run_episode",
    "should_recover",
    "write_recovery_log",
]
