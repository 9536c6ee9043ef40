"""
Dense, concrete-dropout and LSTM layers with hand-written backward passes.

Every layer follows the same contract: ``forward`` returns ``(output, cache)``
and ``backward(d_output, cache)`` returns the gradient with respect to the
input while accumulating parameter gradients into ``layer.grads``. Caches are
returned rather than stored so one layer can be applied at many timesteps
before back-propagation through time.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from introspect_vmc.exceptions import DimensionError, InvalidNoiseError, NonFiniteError

logger = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "tanh", "relu", "softplus")

# p = logistic(rate_logit) stays strictly inside (0, 1) in float64 on this range
RATE_LOGIT_BOUND = 30.0


def check_finite(name: str, *arrays: np.ndarray) -> None:
    """Raise NonFiniteError naming ``name`` if any array holds NaN or inf."""
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(f"Non-finite values in {name}")


def activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return z
    if activation == "tanh":
        return np.tanh(z)
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softplus":
        return np.logaddexp(0.0, z)
    raise ValueError(f"Unknown activation: {activation}")


def activation_grad(z: np.ndarray, y: np.ndarray, activation: str) -> np.ndarray:
    """Derivative of the activation at pre-activation ``z`` (output ``y``)."""
    if activation == "identity":
        return np.ones_like(z)
    if activation == "tanh":
        return 1.0 - y * y
    if activation == "relu":
        return (z > 0.0).astype(np.float64)
    if activation == "softplus":
        return expit(z)
    raise ValueError(f"Unknown activation: {activation}")


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Module:
    """Base class holding parameters and their gradient buffers."""

    def __init__(self) -> None:
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}

    def _register(self, name: str, value: np.ndarray) -> None:
        value = np.array(value, dtype=np.float64)
        check_finite(f"{type(self).__name__}.{name}", value)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def children(self) -> List[Tuple[str, "Module"]]:
        return []

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray, np.ndarray]]:
        """Yield ``(path, parameter, gradient)`` in declaration order."""
        for name, value in self.params.items():
            yield f"{prefix}{name}", value, self.grads[name]
        for child_name, child in self.children():
            yield from child.named_parameters(f"{prefix}{child_name}.")

    def zero_grad(self) -> None:
        for _, _, grad in self.named_parameters():
            grad.fill(0.0)

    def parameter_count(self) -> int:
        return sum(param.size for _, param, _ in self.named_parameters())


class DenseLayer(Module):
    """Fully connected layer ``y = activation(W x + b)``."""

    def __init__(
        self,
        in_width: int,
        out_width: int,
        activation: str = "identity",
        rng: Optional[np.random.Generator] = None,
        weight: Optional[np.ndarray] = None,
        bias: Optional[np.ndarray] = None,
    ):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation: {activation}")
        self.in_width = in_width
        self.out_width = out_width
        self.activation = activation

        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = glorot(rng, out_width, in_width)
        if bias is None:
            bias = np.zeros(out_width)

        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weight.shape != (out_width, in_width) or bias.shape != (out_width,):
            raise DimensionError(
                f"Dense parameters must be ({out_width}, {in_width}) and ({out_width},), "
                f"got {weight.shape} and {bias.shape}"
            )
        self._register("weight", weight)
        self._register("bias", bias)

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[-1] != self.in_width:
            raise DimensionError(f"Dense layer expects width {self.in_width}, got {x2.shape[-1]}")

        z = x2 @ self.params["weight"].T + self.params["bias"]
        y = activate(z, self.activation)
        out = y[0] if squeeze else y
        return out, (x2, z, y, squeeze)

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        x2, z, y, squeeze = cache
        dy2 = np.atleast_2d(np.asarray(dy, dtype=np.float64))
        dz = dy2 * activation_grad(z, y, self.activation)

        self.grads["weight"] += dz.T @ x2
        self.grads["bias"] += dz.sum(axis=0)
        dx = dz @ self.params["weight"]
        return dx[0] if squeeze else dx


class ConcreteDropoutLayer(Module):
    """
    Dropout with a continuous relaxation of the Bernoulli mask.

    The drop probability ``p = logistic(rate_logit)`` is a trainable parameter.
    With uniform noise ``u`` the relaxed drop gate is
    ``z = logistic((logit(p) + logit(u)) / temperature)`` and the output is
    ``x * (1 - z) / (1 - p)`` so that the expectation over noise matches ``x``.
    """

    def __init__(
        self,
        width: int,
        temperature: float = 0.1,
        init_rate: float = 0.1,
        weight_reg: float = 0.0,
        rate_reg: float = 0.0,
    ):
        super().__init__()
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 < init_rate < 1.0:
            raise ValueError("init_rate must lie strictly between 0 and 1")
        if weight_reg < 0 or rate_reg < 0:
            raise ValueError("regularization coefficients must be non-negative")
        self.width = width
        self.temperature = float(temperature)
        self.weight_reg = float(weight_reg)
        self.rate_reg = float(rate_reg)
        self._register("rate_logit", np.array([np.log(init_rate) - np.log1p(-init_rate)]))

    def _clipped_logit(self) -> Tuple[float, float]:
        rho = float(self.params["rate_logit"][0])
        inside = 1.0 if -RATE_LOGIT_BOUND < rho < RATE_LOGIT_BOUND else 0.0
        return float(np.clip(rho, -RATE_LOGIT_BOUND, RATE_LOGIT_BOUND)), inside

    @property
    def rate(self) -> float:
        """Current drop probability, strictly inside (0, 1)."""
        rho, _ = self._clipped_logit()
        return float(expit(rho))

    def set_dataset_size(self, dataset_size: int, length_scale: float = 1e-2) -> None:
        """Derive regularization weights from the training set size."""
        if dataset_size <= 0:
            raise ValueError("dataset_size must be positive")
        self.weight_reg = length_scale ** 2 / dataset_size
        self.rate_reg = 2.0 / dataset_size

    def forward(
        self, x: np.ndarray, noise: Optional[np.ndarray], stochastic: bool = True
    ) -> Tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.width:
            raise DimensionError(f"Dropout layer expects width {self.width}, got {x.shape[-1]}")
        if not stochastic:
            # gates at their expectation: E[(1 - z) / (1 - p)] == 1
            return x.copy(), (x, None, None, False)

        if noise is None:
            raise InvalidNoiseError("Stochastic pass requires a noise array")
        u = np.asarray(noise, dtype=np.float64)
        if u.shape != x.shape:
            raise DimensionError(f"Noise shape {u.shape} does not match input shape {x.shape}")
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise InvalidNoiseError("Dropout noise must be drawn from the open interval (0, 1)")

        rho, _ = self._clipped_logit()
        p = expit(rho)
        logit_u = np.log(u) - np.log1p(-u)
        z = expit((rho + logit_u) / self.temperature)
        y = x * (1.0 - z) / (1.0 - p)
        return y, (x, z, p, True)

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        x, z, p, stochastic = cache
        if not stochastic:
            return np.asarray(dy, dtype=np.float64).copy()

        _, inside = self._clipped_logit()
        t = self.temperature
        dx = dy * (1.0 - z) / (1.0 - p)
        d_out_d_rho = x * (-z * (1.0 - z) / (t * (1.0 - p)) + (1.0 - z) * p / (1.0 - p))
        self.grads["rate_logit"] += inside * np.sum(dy * d_out_d_rho)
        return dx

    def regularizer(self, attached: DenseLayer) -> float:
        """
        Weight and entropy penalty added to the training objective.

        ``weight_reg * |W|^2 / (1 - p) + rate_reg * D * (p log p + (1 - p) log(1 - p))``
        where ``W`` is the kernel of the dense layer this dropout feeds and ``D``
        the dropout input width.
        """
        rho, _ = self._clipped_logit()
        p = expit(rho)
        sq_norm = float(np.sum(attached.params["weight"] ** 2))
        entropy_term = p * np.log(p) + (1.0 - p) * np.log1p(-p)
        return float(self.weight_reg * sq_norm / (1.0 - p) + self.rate_reg * self.width * entropy_term)

    def regularizer_backward(self, attached: DenseLayer, scale: float = 1.0) -> None:
        rho, inside = self._clipped_logit()
        p = expit(rho)
        weight = attached.params["weight"]
        sq_norm = float(np.sum(weight ** 2))

        attached.grads["weight"] += scale * 2.0 * self.weight_reg * weight / (1.0 - p)
        # d/drho [1/(1-p)] = p/(1-p); d/drho [p log p + (1-p) log(1-p)] = rho * p * (1-p)
        d_rho = self.weight_reg * sq_norm * p / (1.0 - p) + self.rate_reg * self.width * rho * p * (1.0 - p)
        self.grads["rate_logit"] += scale * inside * d_rho


@dataclass(frozen=True, eq=False)
class LstmMemory:
    """Hidden and cell state of an LSTM; an immutable value object."""

    hidden: np.ndarray
    cell: np.ndarray

    def __post_init__(self):
        hidden = np.array(self.hidden, dtype=np.float64)
        cell = np.array(self.cell, dtype=np.float64)
        if hidden.shape != cell.shape:
            raise DimensionError(f"Hidden {hidden.shape} and cell {cell.shape} widths differ")
        hidden.setflags(write=False)
        cell.setflags(write=False)
        object.__setattr__(self, "hidden", hidden)
        object.__setattr__(self, "cell", cell)

    @classmethod
    def zeros(cls, width: int, batch: Optional[int] = None) -> "LstmMemory":
        shape = (width,) if batch is None else (batch, width)
        return cls(np.zeros(shape), np.zeros(shape))

    @property
    def width(self) -> int:
        return self.hidden.shape[-1]

    def copy(self) -> "LstmMemory":
        return LstmMemory(self.hidden, self.cell)

    def equals(self, other: "LstmMemory") -> bool:
        """Bit-exact comparison."""
        return bool(
            np.array_equal(self.hidden, other.hidden) and np.array_equal(self.cell, other.cell)
        )


class LstmCell(Module):
    """Single LSTM cell with gate order (input, forget, candidate, output)."""

    def __init__(self, input_width: int, hidden_width: int, rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_width = input_width
        self.hidden_width = hidden_width
        h = hidden_width

        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0
        self._register("weight_x", glorot(rng, 4 * h, input_width))
        self._register("weight_h", glorot(rng, 4 * h, h))
        self._register("bias", bias)

    def step(self, x: np.ndarray, mem: LstmMemory) -> Tuple[np.ndarray, LstmMemory, tuple]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_width:
            raise DimensionError(f"LSTM expects input width {self.input_width}, got {x.shape[-1]}")
        if mem.width != self.hidden_width:
            raise DimensionError(f"LSTM memory width {mem.width} != {self.hidden_width}")

        h = self.hidden_width
        a = x @ self.params["weight_x"].T + mem.hidden @ self.params["weight_h"].T + self.params["bias"]
        i = expit(a[..., :h])
        f = expit(a[..., h:2 * h])
        g = np.tanh(a[..., 2 * h:3 * h])
        o = expit(a[..., 3 * h:])
        cell = f * mem.cell + i * g
        tanh_c = np.tanh(cell)
        hidden = o * tanh_c

        check_finite("lstm", hidden, cell)
        new_mem = LstmMemory(hidden, cell)
        cache = (x, mem.hidden, mem.cell, i, f, g, o, tanh_c)
        return new_mem.hidden, new_mem, cache

    def backward_step(
        self, dh: np.ndarray, dc_next: np.ndarray, cache: tuple
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Back-propagate one step; returns ``(dx, dh_prev, dc_prev)``."""
        x, h_prev, c_prev, i, f, g, o, tanh_c = cache
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_prev = dc * f

        da = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g ** 2), do * o * (1.0 - o)],
            axis=-1,
        )
        da2 = np.atleast_2d(da)
        self.grads["weight_x"] += da2.T @ np.atleast_2d(x)
        self.grads["weight_h"] += da2.T @ np.atleast_2d(h_prev)
        self.grads["bias"] += da2.sum(axis=0)

        dx = da @ self.params["weight_x"]
        dh_prev = da @ self.params["weight_h"]
        return dx, dh_prev, dc_prev
