"""Architecture configuration of the visuomotor policy."""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Tuple

from introspect_vmc.env.types import ObservationMode
from introspect_vmc.exceptions import ConfigurationError
from introspect_vmc.nn.layers import ACTIVATIONS

PROPRIO_WIDTH = 4
HEAD_WIDTH = 3


@dataclass(frozen=True)
class PolicyConfig:
    """
    Network shape and the calibration weight used downstream.

    ``n_fc`` must equal ``n_dropout_layers`` (each dropout layer feeds one
    dense layer). A dropout-free variant keeps ``n_fc`` dense layers and sets
    ``n_dropout_layers = 0``; it exists for the non-Bayesian baseline.
    """

    obs_mode: ObservationMode = ObservationMode.GRID_IMAGE
    frames: int = 4
    conv_channels: Tuple[int, int] = (8, 16)
    encoder_width: int = 32
    lstm_width: int = 64
    fc_width: int = 64
    n_dropout_layers: int = 1
    n_fc: int = 1
    proprio_tile: int = 4
    lam: float = 0.3
    activation: str = "relu"
    temperature: float = 0.1
    init_rate: float = 0.1
    dropout_free: bool = False
    head_widths: Dict[str, int] = field(
        default_factory=lambda: {"delta_ee": 3, "gripper_logits": 3, "q_obj": 3, "q_ee": 3}
    )

    def __post_init__(self):
        object.__setattr__(self, "obs_mode", ObservationMode(self.obs_mode))
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        if self.frames < 1:
            raise ConfigurationError("frames (K) must be at least 1")
        if len(self.conv_channels) != 2:
            raise ConfigurationError("The grid encoder has exactly two convolution stages")
        if min(self.encoder_width, self.lstm_width, self.fc_width, self.proprio_tile) < 1:
            raise ConfigurationError("Layer widths and the proprio tile factor must be positive")
        if self.n_fc not in (1, 2):
            raise ConfigurationError("n_fc must be 1 or 2")
        if self.dropout_free:
            if self.n_dropout_layers != 0:
                raise ConfigurationError("A dropout-free policy has n_dropout_layers = 0")
        elif self.n_dropout_layers != self.n_fc:
            raise ConfigurationError(
                f"n_fc ({self.n_fc}) must match n_dropout_layers ({self.n_dropout_layers})"
            )
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError("lam must lie in [0, 1]")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"Unknown activation {self.activation!r}")
        if self.temperature <= 0 or not 0.0 < self.init_rate < 1.0:
            raise ConfigurationError("Dropout temperature must be positive and init_rate inside (0, 1)")
        if any(w != HEAD_WIDTH for w in self.head_widths.values()):
            raise ConfigurationError("Every output head has width 3")

    @property
    def state_width(self) -> int:
        """Width of the concatenated state representation."""
        return self.encoder_width + PROPRIO_WIDTH * self.proprio_tile

    def architecture(self) -> Dict[str, Any]:
        """JSON-serialisable description stored in checkpoint headers."""
        arch = asdict(self)
        arch["obs_mode"] = self.obs_mode.value
        arch["conv_channels"] = list(self.conv_channels)
        arch["kind"] = "policy"
        return arch

    @classmethod
    def from_architecture(cls, arch: Dict[str, Any]) -> "PolicyConfig":
        values = {k: v for k, v in arch.items() if k != "kind"}
        if arch.get("kind") != "policy":
            raise ConfigurationError("Checkpoint does not describe a policy network")
        return cls(**values)
