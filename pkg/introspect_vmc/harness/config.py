"""
Run configuration for the pipeline commands.

A run is configured from a flat ``key = value`` text file. Lines starting with
``#`` are comments, tuples are comma separated and an empty value means
"unset" for optional keys. Command-line flags override the file and the
dataclass defaults fill in everything else. Every command writes the resolved
configuration back to ``<out>/run_config.txt``.
"""

import typing
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from introspect_vmc.env.types import ObservationMode, Task
from introspect_vmc.exceptions import ConfigurationError
from introspect_vmc.policy.config import PolicyConfig
from introspect_vmc.policy.training import TrainingConfig
from introspect_vmc.recovery.config import ControllerConfig, RecoveryMode
from introspect_vmc.uncertainty.calibration import METRICS

RUN_CONFIG_NAME = 'run_config.txt'

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


@dataclass(frozen=True)
class RunConfig:
    # scenario
    task: str = 'pushing'
    obs_mode: str = 'grid'
    demo_count: int = 500
    horizon: int = 60

    # policy architecture
    frames: int = 4
    conv_channels: Tuple[int, ...] = (8, 16)
    encoder_width: int = 32
    lstm_width: int = 64
    fc_width: int = 64
    n_dropout_layers: int = 1
    n_fc: int = 1
    proprio_tile: int = 4
    activation: str = 'relu'
    temperature: float = 0.1
    init_rate: float = 0.1
    lam: float = 0.3

    # behavioral cloning
    epochs: int = 150
    batch_episodes: int = 8
    learning_rate: float = 1e-3
    val_fraction: float = 0.1
    dropout_free: bool = False

    # monitored controller
    samples: int = 50
    window: int = 20
    t_recovery_init: int = 40
    backtrack_depth: int = 20
    recovery_steps: int = 25
    metric: str = 'trace'
    threshold: Optional[float] = None
    lambdas: Tuple[float, ...] = ()
    modes: Tuple[str, ...] = ('none', 'rand', 'init', 'min_unc')

    # campaign sizes
    n_val: int = 200
    n_foresight_episodes: int = 200
    foresight_epochs: int = 200
    foresight_batch: int = 64
    n_eval: int = 100
    n_binning: int = 400
    n_convergence: int = 10

    # seeds
    seed: int = 0
    data_seed: Optional[int] = None
    train_seed: Optional[int] = None
    eval_seed: Optional[int] = None

    def __post_init__(self):
        try:
            Task(self.task)
            ObservationMode(self.obs_mode)
            for mode in self.modes:
                RecoveryMode(mode)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.metric not in METRICS:
            raise ConfigurationError(f'Unknown uncertainty metric {self.metric!r}')
        counts = ('demo_count', 'horizon', 'samples', 'n_val', 'n_foresight_episodes', 'n_eval', 'n_binning')
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigurationError(f'{name} must be positive')
        if not 0.0 <= self.lam <= 1.0 or any(not 0.0 <= lam <= 1.0 for lam in self.lambdas):
            raise ConfigurationError('lam and every entry of lambdas must lie in [0, 1]')

    @property
    def max_steps(self) -> int:
        return 2 * self.horizon

    @property
    def resolved_data_seed(self) -> int:
        return self.seed if self.data_seed is None else self.data_seed

    @property
    def resolved_train_seed(self) -> int:
        return self.seed + 1 if self.train_seed is None else self.train_seed

    @property
    def resolved_eval_seed(self) -> int:
        return self.seed + 2 if self.eval_seed is None else self.eval_seed

    def policy_config(self, dropout_free: bool = False) -> PolicyConfig:
        return PolicyConfig(
            obs_mode=ObservationMode(self.obs_mode),
            frames=self.frames,
            conv_channels=tuple(self.conv_channels),
            encoder_width=self.encoder_width,
            lstm_width=self.lstm_width,
            fc_width=self.fc_width,
            n_dropout_layers=0 if dropout_free else self.n_dropout_layers,
            n_fc=self.n_fc,
            proprio_tile=self.proprio_tile,
            lam=self.lam,
            activation=self.activation,
            temperature=self.temperature,
            init_rate=self.init_rate,
            dropout_free=dropout_free,
        )

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            batch_episodes=self.batch_episodes,
            learning_rate=self.learning_rate,
            val_fraction=self.val_fraction,
        )

    def controller_config(self, mode: str, threshold: float, lam: Optional[float] = None) -> ControllerConfig:
        return ControllerConfig(
            samples=self.samples,
            threshold=threshold,
            window=self.window,
            t_recovery_init=self.t_recovery_init,
            backtrack_depth=self.backtrack_depth,
            recovery_steps=self.recovery_steps,
            mode=RecoveryMode(mode),
            max_steps=self.max_steps,
            lam=self.lam if lam is None else lam,
            metric=self.metric,
        )

    def as_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


def _hints() -> Dict[str, Any]:
    return typing.get_type_hints(RunConfig)


def parse_value(name: str, raw: str) -> Any:
    """Coerce the text ``raw`` to the declared type of field ``name``."""
    hints = _hints()
    if name not in hints:
        raise ConfigurationError(f'Unknown configuration key {name!r}')
    hint = hints[name]
    raw = raw.strip()

    if typing.get_origin(hint) is Union:
        if raw == '' or raw.lower() == 'none':
            return None
        hint = next(arg for arg in typing.get_args(hint) if arg is not type(None))

    try:
        if typing.get_origin(hint) is tuple:
            item_type = typing.get_args(hint)[0]
            return tuple(item_type(item.strip()) for item in raw.split(',') if item.strip())
        if hint is bool:
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(f'not a boolean: {raw!r}')
        return hint(raw)
    except ValueError as exc:
        raise ConfigurationError(f'Invalid value for {name}: {exc}') from exc


def parse_run_config_text(text: str) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigurationError(f'Line {number}: expected "key = value", got {line!r}')
        key, raw = (part.strip() for part in line.split('=', 1))
        values[key] = parse_value(key, raw)
    return values


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f'Configuration file not found: {path}')
        values.update(parse_run_config_text(path.read_text(encoding='utf-8')))
    known = {f.name for f in fields(RunConfig)}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigurationError(f'Unknown configuration key {key!r}')
        values[key] = value
    return RunConfig(**values)


def _format(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, tuple):
        return ','.join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_run_config(config: RunConfig) -> str:
    lines = ['# Resolved ivmc run configuration']
    for f in fields(RunConfig):
        lines.append(f'{f.name} = {_format(getattr(config, f.name))}')
    return '\n'.join(lines) + '\n'


def write_run_config(out_dir: Union[str, Path], config: RunConfig) -> Path:
    path = Path(out_dir) / RUN_CONFIG_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_run_config(config), encoding='utf-8')
    return path
