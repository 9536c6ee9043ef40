"""Choose the sampled action with the lowest predicted next-tick uncertainty."""

from dataclasses import dataclass

import numpy as np

from introspect_vmc.env.types import ActionCommand, Gripper, Vec3
from introspect_vmc.exceptions import InsufficientSamplesError
from introspect_vmc.foresight.model import ForesightModel, action_features
from introspect_vmc.nn.layers import LstmMemory
from introspect_vmc.policy.model import PolicyModel
from introspect_vmc.uncertainty.calibration import ActionSampleSet
from introspect_vmc.uncertainty.sampling import mc_sample


@dataclass
class Selection:
    action: ActionCommand
    index: int
    scores: np.ndarray
    samples: ActionSampleSet
    embedding: np.ndarray
    memory: LstmMemory


def candidate_action(samples: ActionSampleSet, index: int) -> ActionCommand:
    return ActionCommand(
        Vec3.of(samples.delta_ee[index]), Gripper(int(np.argmax(samples.gripper_probs[index])))
    )


def score_candidates(foresight: ForesightModel, e_t: np.ndarray, samples: ActionSampleSet) -> np.ndarray:
    features = action_features(samples.delta_ee, samples.gripper_logits)
    return foresight.predict_batch(e_t[None], features)


def min_uncertainty_action(
    policy: PolicyModel,
    foresight: ForesightModel,
    s_t: np.ndarray,
    mem: LstmMemory,
    samples: int,
    noise_root: int,
    tick: int = 0,
) -> Selection:
    """Argmin of predicted uncertainty over ``samples`` candidates; lowest index on ties."""
    if samples < 1:
        raise InsufficientSamplesError("Action selection needs at least one candidate")
    sample_set, e_t, new_mem = mc_sample(policy, s_t, mem, samples, noise_root, tick)
    scores = score_candidates(foresight, e_t, sample_set)
    index = int(np.argmin(scores))
    return Selection(candidate_action(sample_set, index), index, scores, sample_set, e_t, new_mem)
