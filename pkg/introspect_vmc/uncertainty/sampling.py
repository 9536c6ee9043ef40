"""
Monte-Carlo sampling of the policy head stack.

The LSTM runs once per tick; only the dropout/dense stack after it is sampled.
Sample ``i`` at a tick draws its noise from its own child of
``SeedSequence([noise_root, tick])``, so the set is identical however the
passes are scheduled.
"""

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from introspect_vmc.env.types import EpisodeRecord
from introspect_vmc.exceptions import InsufficientSamplesError
from introspect_vmc.nn.layers import LstmMemory
from introspect_vmc.policy.model import NOISE_EPS, PolicyModel
from introspect_vmc.policy.training import episode_arrays
from introspect_vmc.uncertainty.calibration import ActionSampleSet

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES = 50
CONVERGENCE_SAMPLE_SIZES = (5, 10, 25, 50, 100)


def sample_noise(model: PolicyModel, noise_root: int, tick: int, samples: int) -> List[np.ndarray]:
    """Per-layer ``(S, width)`` noise; row ``i`` comes from the i-th child stream."""
    children = np.random.SeedSequence([int(noise_root) & 0xFFFFFFFF, int(tick)]).spawn(samples)
    widths = model.noise_widths()
    rows = [[] for _ in widths]
    for child in children:
        rng = np.random.default_rng(child)
        for layer, width in enumerate(widths):
            rows[layer].append(rng.uniform(NOISE_EPS, 1.0 - NOISE_EPS, size=width))
    return [np.asarray(r) for r in rows]


def sample_heads(
    model: PolicyModel, e_t: np.ndarray, samples: int, noise_root: int, tick: int
) -> ActionSampleSet:
    if samples < 1:
        raise InsufficientSamplesError("At least one Monte-Carlo sample is required")
    embedding = np.broadcast_to(e_t, (samples, e_t.shape[-1]))
    noise = sample_noise(model, noise_root, tick, samples)
    heads, _ = model.head_forward(embedding, noise, stochastic=True)
    return ActionSampleSet(heads.delta_ee, heads.gripper_logits, heads.q_obj, heads.q_ee, tick=tick)


def mc_sample(
    model: PolicyModel,
    s_t: np.ndarray,
    mem: LstmMemory,
    samples: int = DEFAULT_SAMPLES,
    noise_root: int = 0,
    tick: int = 0,
) -> Tuple[ActionSampleSet, np.ndarray, LstmMemory]:
    """Advance memory once, then draw ``samples`` stochastic head passes."""
    e_t, new_mem = model.lstm_forward(s_t, mem)
    return sample_heads(model, e_t, samples, noise_root, tick), e_t, new_mem


def mc_convergence_curve(
    model: PolicyModel,
    episodes: Sequence[EpisodeRecord],
    sample_sizes: Sequence[int] = CONVERGENCE_SAMPLE_SIZES,
    noise_root: int = 0,
) -> List[Dict[str, float]]:
    """
    Teacher-forced error of the Monte-Carlo mean delta against the expert.

    For each sample size the per-episode median of ``|mean delta - expert
    delta|`` is averaged over episodes. Repeated sizes get distinct noise.
    """
    embeddings = []
    for record in episodes:
        arrays = episode_arrays(record, model.config)
        s, _ = model.encode_batch(arrays.frames, arrays.proprio)
        mem = LstmMemory.zeros(model.config.lstm_width)
        per_tick = []
        for t in range(len(arrays)):
            e_t, mem = model.lstm_forward(s[t], mem)
            per_tick.append(e_t)
        embeddings.append((np.asarray(per_tick), arrays.delta_ee))

    table = []
    for k, size in enumerate(sample_sizes):
        medians = []
        for ep, (e_seq, expert) in enumerate(embeddings):
            errors = []
            for t, e_t in enumerate(e_seq):
                root = (int(noise_root) * 1_000_003 + k * 7919 + ep) & 0xFFFFFFFF
                samples = sample_heads(model, e_t, size, root, t)
                errors.append(float(np.linalg.norm(samples.delta_ee.mean(axis=0) - expert[t])))
            medians.append(float(np.median(errors)))
        table.append({"samples": int(size), "error": float(np.mean(medians))})
        logger.info("Monte-Carlo convergence S=%d error=%.6f", size, table[-1]["error"])
    return table


def mc_timing(
    model: PolicyModel, samples: int = DEFAULT_SAMPLES, repeats: int = 20, rng: Optional[np.random.Generator] = None
) -> Dict[str, float]:
    """Mean wall-clock seconds of a single deterministic stack pass and of an S-sample pass."""
    rng = rng if rng is not None else np.random.default_rng(0)
    e_t = rng.standard_normal(model.config.lstm_width)

    start = time.perf_counter()
    for _ in range(repeats):
        model.head_forward(e_t, None, stochastic=False)
    single = (time.perf_counter() - start) / repeats

    start = time.perf_counter()
    for r in range(repeats):
        sample_heads(model, e_t, samples, 0, r)
    sampled = (time.perf_counter() - start) / repeats

    return {"samples": samples, "single_pass_s": single, "mc_pass_s": sampled, "ratio": sampled / max(single, 1e-12)}
