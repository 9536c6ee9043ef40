"""
Bayesian visuomotor policy network.

Observation stack -> encoder -> concat(tiled proprio) -> LSTM -> interleaved
concrete-dropout / dense stack -> four linear heads (end-effector delta,
gripper logits, object position, end-effector position).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from introspect_vmc.env import simulator
from introspect_vmc.env.types import Observation, ObservationMode, ProprioState
from introspect_vmc.exceptions import DimensionError, InvalidNoiseError
from introspect_vmc.nn.checkpoint import load_checkpoint, read_architecture, save_checkpoint
from introspect_vmc.nn.conv import Conv2dLayer
from introspect_vmc.nn.layers import (
    ConcreteDropoutLayer,
    DenseLayer,
    LstmCell,
    LstmMemory,
    Module,
    check_finite,
)
from introspect_vmc.nn.losses import HEAD_NAMES
from introspect_vmc.policy.config import PROPRIO_WIDTH, PolicyConfig

logger = logging.getLogger(__name__)

# uniform noise is drawn from [NOISE_EPS, 1 - NOISE_EPS)
NOISE_EPS = 1e-6


@dataclass
class HeadOutputs:
    """Head predictions; each field is ``(3,)`` or ``(N, 3)``."""

    delta_ee: np.ndarray
    gripper_logits: np.ndarray
    q_obj: np.ndarray
    q_ee: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in HEAD_NAMES}

    @property
    def gripper_probs(self) -> np.ndarray:
        return softmax(self.gripper_logits, axis=-1)


class GridEncoder(Module):
    """Two strided convolutions over the channel-stacked frames, then a dense projection."""

    def __init__(self, config: PolicyConfig, rng: np.random.Generator):
        super().__init__()
        c1, c2 = config.conv_channels
        self.in_channels = 3 * config.frames
        self.conv1 = Conv2dLayer(self.in_channels, c1, activation=config.activation, rng=rng)
        self.conv2 = Conv2dLayer(c1, c2, activation=config.activation, rng=rng)
        side = self.conv2.output_size(self.conv1.output_size(simulator.GRID_SIZE))
        self.flat_width = c2 * side * side
        self.dense = DenseLayer(self.flat_width, config.encoder_width, config.activation, rng)

    def children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2), ("dense", self.dense)]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        h1, c1 = self.conv1.forward(x)
        h2, c2 = self.conv2.forward(h1)
        out, c3 = self.dense.forward(h2.reshape(h2.shape[0], -1))
        return out, (c1, c2, c3, h2.shape)

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        c1, c2, c3, h2_shape = cache
        dh2 = self.dense.backward(dy, c3).reshape(h2_shape)
        return self.conv1.backward(self.conv2.backward(dh2, c2), c1)


class StateEncoder(Module):
    """Dense projection of the stacked oracle state vectors."""

    def __init__(self, config: PolicyConfig, rng: np.random.Generator):
        super().__init__()
        self.dense = DenseLayer(
            simulator.STATE_VECTOR_WIDTH * config.frames, config.encoder_width, config.activation, rng
        )

    def children(self):
        return [("dense", self.dense)]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        return self.dense.forward(x.reshape(x.shape[0], -1))

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        return self.dense.backward(dy, cache)


class PolicyModel(Module):
    def __init__(self, config: PolicyConfig, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.config = config
        if config.obs_mode == ObservationMode.GRID_IMAGE:
            self.encoder: Module = GridEncoder(config, rng)
        else:
            self.encoder = StateEncoder(config, rng)
        self.lstm = LstmCell(config.state_width, config.lstm_width, rng)

        self.dropouts: List[Optional[ConcreteDropoutLayer]] = []
        self.fcs: List[DenseLayer] = []
        width = config.lstm_width
        for _ in range(config.n_fc):
            if config.dropout_free:
                self.dropouts.append(None)
            else:
                self.dropouts.append(
                    ConcreteDropoutLayer(width, config.temperature, config.init_rate)
                )
            self.fcs.append(DenseLayer(width, config.fc_width, config.activation, rng))
            width = config.fc_width

        self.heads = {name: DenseLayer(width, config.head_widths[name], "identity", rng) for name in HEAD_NAMES}

    def children(self):
        kids = [("encoder", self.encoder), ("lstm", self.lstm)]
        for i, (dropout, fc) in enumerate(zip(self.dropouts, self.fcs)):
            if dropout is not None:
                kids.append((f"dropout{i}", dropout))
            kids.append((f"fc{i}", fc))
        kids.extend((f"head_{name}", head) for name, head in self.heads.items())
        return kids

    @property
    def dropout_layers(self) -> List[ConcreteDropoutLayer]:
        return [d for d in self.dropouts if d is not None]

    @property
    def dropout_rates(self) -> List[float]:
        return [d.rate for d in self.dropout_layers]

    def architecture(self) -> Dict:
        return self.config.architecture()

    # -- state representation -------------------------------------------------

    def stack_frames(self, obs_buffer: Sequence[Observation]) -> np.ndarray:
        """Channel-stack the last K observations (oldest first)."""
        if len(obs_buffer) != self.config.frames:
            raise DimensionError(f"Observation buffer holds {len(obs_buffer)} frames, expected {self.config.frames}")
        arrays = [np.asarray(o.as_array(), dtype=np.float64) for o in obs_buffer]
        return np.concatenate(arrays, axis=0)

    def tile_proprio(self, proprio: np.ndarray) -> np.ndarray:
        proprio = np.asarray(proprio, dtype=np.float64)
        if proprio.shape[-1] != PROPRIO_WIDTH:
            raise DimensionError(f"Proprioception has width {proprio.shape[-1]}, expected {PROPRIO_WIDTH}")
        reps = (1,) * (proprio.ndim - 1) + (self.config.proprio_tile,)
        return np.tile(proprio, reps)

    def encode_batch(self, frames: np.ndarray, proprio: np.ndarray) -> Tuple[np.ndarray, tuple]:
        """Encode ``(N, ...)`` stacked frames with ``(N, 4)`` proprioception."""
        features, cache = self.encoder.forward(frames)
        check_finite("encoder", features)
        return np.concatenate([features, self.tile_proprio(proprio)], axis=-1), cache

    def encode_backward(self, ds: np.ndarray, cache: tuple) -> None:
        self.encoder.backward(ds[:, :self.config.encoder_width], cache)

    def encode(self, obs_buffer: Sequence[Observation], proprio: ProprioState) -> np.ndarray:
        frames = self.stack_frames(obs_buffer)[None]
        s, _ = self.encode_batch(frames, proprio.as_array()[None])
        return s[0]

    # -- recurrent core and head stack -----------------------------------------

    def lstm_forward(self, s_t: np.ndarray, mem: LstmMemory) -> Tuple[np.ndarray, LstmMemory]:
        if mem.width != self.config.lstm_width:
            raise DimensionError(f"Memory width {mem.width} does not match lstm_width {self.config.lstm_width}")
        hidden, new_mem, _ = self.lstm.step(s_t, mem)
        return hidden, new_mem

    def noise_widths(self) -> List[int]:
        return [d.width for d in self.dropout_layers]

    def draw_noise(self, rng: np.random.Generator, rows: Optional[int] = None) -> List[np.ndarray]:
        """One uniform draw per unit of every dropout layer."""
        return [
            rng.uniform(NOISE_EPS, 1.0 - NOISE_EPS, size=(w,) if rows is None else (rows, w))
            for w in self.noise_widths()
        ]

    def head_forward(
        self, e: np.ndarray, noise: Optional[Sequence[np.ndarray]], stochastic: bool
    ) -> Tuple[HeadOutputs, tuple]:
        """Dropout/dense stack and heads applied to embedding(s) ``e``."""
        if stochastic and len(self.dropout_layers) > 0:
            if noise is None or len(noise) != len(self.dropout_layers):
                raise InvalidNoiseError("One noise array per dropout layer is required")
        h = np.asarray(e, dtype=np.float64)
        caches = []
        k = 0
        for i, (dropout, fc) in enumerate(zip(self.dropouts, self.fcs)):
            d_cache = None
            if dropout is not None:
                layer_noise = noise[k] if stochastic else None
                h, d_cache = dropout.forward(h, layer_noise, stochastic)
                k += 1
            h, f_cache = fc.forward(h)
            check_finite(f"fc{i}", h)
            caches.append((d_cache, f_cache))

        outputs = {}
        head_caches = {}
        for name, head in self.heads.items():
            outputs[name], head_caches[name] = head.forward(h)
            check_finite(f"head_{name}", outputs[name])
        return HeadOutputs(**outputs), (caches, head_caches)

    def head_backward(self, grads: Dict[str, np.ndarray], cache: tuple) -> np.ndarray:
        caches, head_caches = cache
        dh = None
        for name, head in self.heads.items():
            contribution = head.backward(grads[name], head_caches[name])
            dh = contribution if dh is None else dh + contribution
        for (dropout, fc), (d_cache, f_cache) in zip(reversed(list(zip(self.dropouts, self.fcs))), reversed(caches)):
            dh = fc.backward(dh, f_cache)
            if dropout is not None:
                dh = dropout.backward(dh, d_cache)
        return dh

    def policy_step(
        self,
        s_t: np.ndarray,
        mem: LstmMemory,
        rng: Optional[np.random.Generator] = None,
        stochastic: bool = False,
    ) -> Tuple[HeadOutputs, np.ndarray, LstmMemory]:
        """
        One control tick: LSTM update then the head stack. A stochastic pass
        draws fresh concrete noise from ``rng``; replaying the same generator
        state replays the same outputs.
        """
        e_t, new_mem = self.lstm_forward(s_t, mem)
        noise = None
        if stochastic:
            if rng is None:
                raise InvalidNoiseError("A stochastic pass needs a noise generator")
            noise = self.draw_noise(rng)
        heads, _ = self.head_forward(e_t, noise, stochastic)
        return heads, e_t, new_mem

    # -- regularisation --------------------------------------------------------

    def set_dataset_size(self, dataset_size: int) -> None:
        for dropout in self.dropout_layers:
            dropout.set_dataset_size(dataset_size)

    def _dropout_pairs(self):
        return [(d, fc) for d, fc in zip(self.dropouts, self.fcs) if d is not None]

    def regularizer(self) -> float:
        return float(sum(d.regularizer(fc) for d, fc in self._dropout_pairs()))

    def regularizer_backward(self, scale: float = 1.0) -> None:
        for dropout, fc in self._dropout_pairs():
            dropout.regularizer_backward(fc, scale)

    # -- persistence -----------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(path, self, self.architecture())

    @classmethod
    def load(cls, path) -> "PolicyModel":
        config = PolicyConfig.from_architecture(read_architecture(path))
        model = cls(config)
        load_checkpoint(path, model, model.architecture())
        return model
