"""
Closed-loop policy rollouts.

``RolloutContext`` owns everything one episode mutates: the environment state,
the K-frame observation buffer, the LSTM memory, the stage tracker and the
record. The recovery controller drives the same context, so a controller with
recovery disabled produces exactly the records of ``rollout``.
"""

import logging
from collections import deque
from enum import Enum
from typing import Deque, Optional, Tuple

import numpy as np

from introspect_vmc.env import simulator
from introspect_vmc.env.demos import make_step
from introspect_vmc.env.metrics import StageTracker
from introspect_vmc.env.types import ActionCommand, EnvState, EpisodeRecord, Gripper, Observation, ProprioState, Task, Vec3
from introspect_vmc.nn.layers import LstmMemory
from introspect_vmc.policy.model import HeadOutputs, PolicyModel
from introspect_vmc.uncertainty.calibration import ActionSampleSet, mean_action, uncertainty_from_samples
from introspect_vmc.uncertainty.sampling import DEFAULT_SAMPLES, mc_sample
from introspect_vmc.utils.seeding import PURPOSE_NOISE, derive_seed

logger = logging.getLogger(__name__)


class Controller(str, Enum):
    MC_MEAN = "mc_mean"
    DETERMINISTIC = "deterministic"


def episode_noise_root(seed: int, scene_seed: int) -> int:
    return derive_seed(seed, PURPOSE_NOISE, scene_seed)


def head_action(heads: HeadOutputs) -> ActionCommand:
    """Action from a single pass: the delta head and the most likely gripper class."""
    return ActionCommand(Vec3.of(heads.delta_ee), Gripper(int(np.argmax(heads.gripper_logits))))


class RolloutContext:
    def __init__(
        self,
        model: PolicyModel,
        task: Task,
        scene_seed: int,
        episode_id: int = 0,
        noise_root: int = 0,
        state: Optional[EnvState] = None,
    ):
        self.model = model
        self.task = Task(task)
        self.noise_root = noise_root
        self.state = state if state is not None else simulator.reset(self.task, scene_seed)
        self.mem = LstmMemory.zeros(model.config.lstm_width)
        self.buffer: Deque[Observation] = deque(maxlen=model.config.frames)
        self.tracker = StageTracker(self.task)
        self.tracker.update(self.state)
        self.record = EpisodeRecord(
            task=self.task, scene_seed=scene_seed, episode_id=episode_id, states=[self.state]
        )
        self.refill_buffer()

    @property
    def tick(self) -> int:
        return self.state.tick

    @property
    def success(self) -> bool:
        return self.tracker.success

    def current_observation(self) -> Observation:
        return simulator.observe(self.state, self.model.config.obs_mode)

    def refill_buffer(self) -> None:
        """Fill every buffer slot with the current observation, as at episode start."""
        observation = self.current_observation()
        self.buffer.clear()
        for _ in range(self.model.config.frames):
            self.buffer.append(observation)

    def state_rep(self) -> np.ndarray:
        return self.model.encode(list(self.buffer), ProprioState.from_state(self.state))

    def reset_memory(self) -> None:
        self.mem = LstmMemory.zeros(self.model.config.lstm_width)

    def mc_decision(
        self, samples: int, lam: float, metric: str = "trace"
    ) -> Tuple[ActionCommand, float, ActionSampleSet, np.ndarray]:
        """Sample the policy at the current tick and advance memory once."""
        sample_set, e_t, self.mem = mc_sample(
            self.model, self.state_rep(), self.mem, samples, self.noise_root, self.tick
        )
        u = uncertainty_from_samples(sample_set, lam, metric) if samples >= 2 else 0.0
        return mean_action(sample_set), u, sample_set, e_t

    def deterministic_decision(self) -> ActionCommand:
        heads, _, self.mem = self.model.policy_step(self.state_rep(), self.mem, stochastic=False)
        return head_action(heads)

    def execute(self, action: ActionCommand, uncertainty: Optional[float] = None) -> np.ndarray:
        """Step the environment, record the tick and return the applied displacement."""
        step = make_step(self.state, action, self.model.config.obs_mode)
        step.uncertainty = uncertainty
        self.record.steps.append(step)
        before = self.state
        self.state = simulator.step(self.state, action)
        self.record.states.append(self.state)
        self.tracker.update(self.state)
        self.buffer.append(self.current_observation())
        return simulator.applied_displacement(before, self.state)

    def finish(self) -> EpisodeRecord:
        self.record.stage_flags = self.tracker.flags
        self.record.terminal_tick = self.tick
        return self.record


def rollout(
    model: PolicyModel,
    task: Task,
    scene_seed: int,
    controller: Controller = Controller.MC_MEAN,
    max_steps: int = 120,
    seed: int = 0,
    samples: int = DEFAULT_SAMPLES,
    lam: Optional[float] = None,
    metric: str = "trace",
    episode_id: int = 0,
) -> EpisodeRecord:
    """
    Run the policy until task success or ``max_steps`` ticks. LSTM memory is
    carried across the whole episode. Monte-Carlo mode executes the mean of
    ``samples`` stochastic passes and records the per-tick uncertainty.
    """
    controller = Controller(controller)
    lam = model.config.lam if lam is None else lam
    ctx = RolloutContext(model, task, scene_seed, episode_id, episode_noise_root(seed, scene_seed))
    while ctx.tick < max_steps and not ctx.success:
        if controller == Controller.MC_MEAN:
            action, u, _, _ = ctx.mc_decision(samples, lam, metric)
            ctx.execute(action, u)
        else:
            ctx.execute(ctx.deterministic_decision())
    return ctx.finish()
