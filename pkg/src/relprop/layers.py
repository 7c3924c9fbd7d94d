"""Layer variants of the minimal feedforward engine.

A layer is an immutable description plus pure functions: ``forward`` maps an
input array to an output array, ``input_gradient`` is the vector-Jacobian
product used for reverse-mode differentiation, and the parameterized layers
(``Dense``, ``Conv2D``) additionally expose parameter gradients for the toy
trainer. Dense weights follow the ``w[i, j]`` convention: row ``i`` indexes
the input neuron, column ``j`` the output neuron.

Convolution and pooling use valid padding only; spatial inputs are
channel-first ``(channels, height, width)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch


def _as_float64(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Sliding windows of shape (ch, out_h, out_w, kh, kw) with the given stride."""
    return sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]


@dataclass(frozen=True, eq=False)
class Dense:
    """Fully connected layer: y_j = sum_i x_i w_ij + b_j."""

    weights: np.ndarray
    bias: np.ndarray

    kind = "dense"

    def __post_init__(self):
        object.__setattr__(self, "weights", _as_float64(self.weights))
        object.__setattr__(self, "bias", _as_float64(self.bias))
        if self.weights.ndim != 2:
            raise ShapeMismatch(f"dense weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeMismatch(
                f"dense bias shape {self.bias.shape} inconsistent with "
                f"{self.weights.shape[1]} output neurons"
            )

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.weights.shape[0],):
            raise ShapeMismatch(
                f"dense layer expects input shape ({self.weights.shape[0]},), "
                f"got {tuple(input_shape)}"
            )
        return (self.weights.shape[1],)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return self.weights @ grad_out

    def param_gradients(self, x: np.ndarray, grad_out: np.ndarray) -> dict:
        return {"weights": np.outer(x, grad_out), "bias": grad_out.copy()}


@dataclass(frozen=True, eq=False)
class Conv2D:
    """Valid-padding 2-D convolution, kernel shaped (out_ch, in_ch, kh, kw)."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1

    kind = "conv2d"

    def __post_init__(self):
        object.__setattr__(self, "kernel", _as_float64(self.kernel))
        object.__setattr__(self, "bias", _as_float64(self.bias))
        if self.kernel.ndim != 4:
            raise ShapeMismatch(f"conv kernel must be 4-D, got shape {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise ShapeMismatch(
                f"conv bias shape {self.bias.shape} inconsistent with "
                f"{self.kernel.shape[0]} output channels"
            )
        if self.stride < 1:
            raise ShapeMismatch(f"conv stride must be >= 1, got {self.stride}")

    def output_shape(self, input_shape):
        out_ch, in_ch, kh, kw = self.kernel.shape
        if len(input_shape) != 3 or input_shape[0] != in_ch:
            raise ShapeMismatch(
                f"conv layer expects ({in_ch}, h, w) input, got {tuple(input_shape)}"
            )
        _, h, w = input_shape
        if h < kh or w < kw:
            raise ShapeMismatch(f"conv kernel {kh}x{kw} larger than input {h}x{w}")
        return (out_ch, (h - kh) // self.stride + 1, (w - kw) // self.stride + 1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        _, _, kh, kw = self.kernel.shape
        win = _windows(x, kh, kw, self.stride)
        return np.einsum("cuvij,ocij->ouv", win, self.kernel) + self.bias[:, None, None]

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        _, _, kh, kw = self.kernel.shape
        s = self.stride
        grad_in = np.zeros_like(x)
        for u in range(grad_out.shape[1]):
            for v in range(grad_out.shape[2]):
                grad_in[:, u * s:u * s + kh, v * s:v * s + kw] += np.tensordot(
                    grad_out[:, u, v], self.kernel, axes=(0, 0)
                )
        return grad_in

    def param_gradients(self, x: np.ndarray, grad_out: np.ndarray) -> dict:
        _, _, kh, kw = self.kernel.shape
        win = _windows(x, kh, kw, self.stride)
        return {
            "kernel": np.einsum("ouv,cuvij->ocij", grad_out, win),
            "bias": grad_out.sum(axis=(1, 2)),
        }


@dataclass(frozen=True)
class MaxPool2D:
    """Per-channel max pooling. The forward pass records the argmax per cell."""

    window: tuple
    stride: int

    kind = "maxpool2d"

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(v) for v in self.window))
        if len(self.window) != 2 or min(self.window) < 1 or self.stride < 1:
            raise ShapeMismatch(f"bad pool geometry window={self.window} stride={self.stride}")

    def output_shape(self, input_shape):
        ph, pw = self.window
        if len(input_shape) != 3:
            raise ShapeMismatch(f"pool expects (ch, h, w) input, got {tuple(input_shape)}")
        _, h, w = input_shape
        if h < ph or w < pw:
            raise ShapeMismatch(f"pool window {ph}x{pw} larger than input {h}x{w}")
        return (input_shape[0], (h - ph) // self.stride + 1, (w - pw) // self.stride + 1)

    def forward_with_argmax(self, x: np.ndarray):
        ph, pw = self.window
        win = _windows(x, ph, pw, self.stride)
        flat = win.reshape(win.shape[:3] + (ph * pw,))
        argmax = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
        return out, argmax

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_with_argmax(x)[0]

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray, argmax: np.ndarray) -> np.ndarray:
        grad_in = np.zeros_like(x)
        c, r, col = self.winner_indices(argmax)
        np.add.at(grad_in, (c, r, col), grad_out)
        return grad_in

    def winner_indices(self, argmax: np.ndarray):
        """Absolute (channel, row, col) input coordinates of each window winner."""
        ph, pw = self.window
        ch, oh, ow = argmax.shape
        c, u, v = np.meshgrid(np.arange(ch), np.arange(oh), np.arange(ow), indexing="ij")
        return c, u * self.stride + argmax // pw, v * self.stride + argmax % pw


@dataclass(frozen=True)
class SumPool2D:
    """Per-channel sum pooling."""

    window: tuple
    stride: int

    kind = "sumpool2d"

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(v) for v in self.window))
        if len(self.window) != 2 or min(self.window) < 1 or self.stride < 1:
            raise ShapeMismatch(f"bad pool geometry window={self.window} stride={self.stride}")

    output_shape = MaxPool2D.output_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        ph, pw = self.window
        return _windows(x, ph, pw, self.stride).sum(axis=(3, 4))

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        ph, pw = self.window
        s = self.stride
        grad_in = np.zeros_like(x)
        for u in range(grad_out.shape[1]):
            for v in range(grad_out.shape[2]):
                grad_in[:, u * s:u * s + ph, v * s:v * s + pw] += grad_out[:, u, v, None, None]
        return grad_in


@dataclass(frozen=True)
class ReLU:
    """Elementwise max(0, x). The derivative at exactly 0 is defined as 0."""

    kind = "relu"

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return np.where(x > 0.0, grad_out, 0.0)


@dataclass(frozen=True)
class Flatten:
    """Row-major reshape to a vector."""

    kind = "flatten"

    def output_shape(self, input_shape):
        size = 1
        for d in input_shape:
            size *= d
        return (size,)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(-1)

    def input_gradient(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(x.shape)


PARAMETERIZED = (Dense, Conv2D)
