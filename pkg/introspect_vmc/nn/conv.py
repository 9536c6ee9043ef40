"""Strided 2-D convolution for the small grid-image encoder."""

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from introspect_vmc.exceptions import DimensionError
from introspect_vmc.nn.layers import ACTIVATIONS, Module, activate, activation_grad


class Conv2dLayer(Module):
    """Square-kernel convolution over ``(N, C, H, W)`` batches using im2col."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int = 3,
        stride: int = 2,
        padding: int = 1,
        activation: str = "relu",
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation: {activation}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.activation = activation

        fan_in = in_channels * kernel * kernel
        limit = np.sqrt(6.0 / (fan_in + out_channels))
        self._register("weight", rng.uniform(-limit, limit, size=(out_channels, in_channels, kernel, kernel)))
        self._register("bias", np.zeros(out_channels))

    def output_size(self, size: int) -> int:
        return (size + 2 * self.padding - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise DimensionError(
                f"Conv layer expects (N, {self.in_channels}, H, W), got {x.shape}"
            )
        n, c, height, width = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        out_h, out_w = self.output_size(height), self.output_size(width)

        padded = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        windows = sliding_window_view(padded, (k, k), axis=(2, 3))[:, :, ::s, ::s][:, :, :out_h, :out_w]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * k * k)

        z = cols @ self.params["weight"].reshape(self.out_channels, -1).T + self.params["bias"]
        z = z.reshape(n, out_h, out_w, self.out_channels).transpose(0, 3, 1, 2)
        y = activate(z, self.activation)
        return y, (x.shape, cols, z, y)

    def backward(self, dy: np.ndarray, cache: tuple) -> np.ndarray:
        x_shape, cols, z, y = cache
        n, c, height, width = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        out_h, out_w = z.shape[2], z.shape[3]

        dz = dy * activation_grad(z, y, self.activation)
        dz2 = dz.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.grads["weight"] += (dz2.T @ cols).reshape(self.params["weight"].shape)
        self.grads["bias"] += dz2.sum(axis=0)

        dcols = (dz2 @ self.params["weight"].reshape(self.out_channels, -1))
        dcols = dcols.reshape(n, out_h, out_w, c, k, k)
        dpadded = np.zeros((n, c, height + 2 * p, width + 2 * p))
        for i in range(k):
            for j in range(k):
                dpadded[:, :, i:i + s * out_h:s, j:j + s * out_w:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dpadded[:, :, p:p + height, p:p + width]
