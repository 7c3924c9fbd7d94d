"""Sequential model description, forward inference, and reverse-mode gradients.

A ``Model`` is validated once at construction: the output shape of every
layer must equal the input shape of the next, and the final layer must emit
a vector of logits. Models and input arrays are never mutated, so they can
be shared freely across concurrent explanation runs; an ``ActivationTrace``
belongs to a single forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteValue, ShapeMismatch, TraceMismatch
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, SumPool2D

Layer = Dense | Conv2D | MaxPool2D | SumPool2D | ReLU | Flatten


@dataclass(frozen=True, eq=False)
class Model:
    input_shape: tuple
    layers: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if any(d <= 0 for d in self.input_shape) or not self.input_shape:
            raise ShapeMismatch(f"input shape must have positive dims, got {self.input_shape}")
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        if len(shapes[-1]) != 1:
            raise ShapeMismatch(f"final layer must emit a logit vector, got shape {shapes[-1]}")
        object.__setattr__(self, "activation_shapes", tuple(shapes))

    @property
    def output_size(self) -> int:
        return self.activation_shapes[-1][0]


@dataclass(frozen=True, eq=False)
class LayerStep:
    """Input/output pair recorded for one layer, plus pool argmax bookkeeping."""

    input: np.ndarray
    output: np.ndarray
    pool_argmax: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class ActivationTrace:
    model: Model
    steps: tuple

    @property
    def output(self) -> np.ndarray:
        return self.steps[-1].output

    def validate_for(self, model: Model) -> None:
        if self.model is not model:
            raise TraceMismatch("trace was produced by a different model")
        if len(self.steps) != len(model.layers):
            raise TraceMismatch("trace length does not match the model's layer count")
        for k in range(len(self.steps) - 1):
            if self.steps[k].output is not self.steps[k + 1].input:
                raise TraceMismatch(f"trace is broken between layers {k} and {k + 1}")


def _check_input(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeMismatch(f"input shape {x.shape} != model input shape {model.input_shape}")
    return x


def forward_traced(model: Model, x: np.ndarray):
    """Run the network and record every layer's input and output.

    Returns ``(logits, trace)``; ``forward`` is this without the trace.
    """
    x = _check_input(model, x)
    steps = []
    current = x
    for k, layer in enumerate(model.layers):
        argmax = None
        if isinstance(layer, MaxPool2D):
            out, argmax = layer.forward_with_argmax(current)
        else:
            out = layer.forward(current)
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue(f"layer {k} ({layer.kind}) produced a non-finite value")
        steps.append(LayerStep(input=current, output=out, pool_argmax=argmax))
        current = out
    return current, ActivationTrace(model=model, steps=tuple(steps))


def forward(model: Model, x: np.ndarray) -> np.ndarray:
    return forward_traced(model, x)[0]


def _check_output_index(model: Model, output_index: int) -> None:
    if not 0 <= output_index < model.output_size:
        raise ShapeMismatch(
            f"output index {output_index} out of range for {model.output_size} logits"
        )


def _layer_input_gradient(layer, step: LayerStep, grad_out: np.ndarray) -> np.ndarray:
    if isinstance(layer, MaxPool2D):
        return layer.input_gradient(step.input, grad_out, step.pool_argmax)
    return layer.input_gradient(step.input, grad_out)


def backpropagate(model: Model, trace: ActivationTrace, grad_logits: np.ndarray):
    """Reverse-mode sweep through a recorded trace.

    Returns ``(grad_input, param_grads)`` where ``param_grads[k]`` is a dict
    of parameter gradients for layer ``k`` (empty for parameter-free layers).
    """
    trace.validate_for(model)
    grad = np.asarray(grad_logits, dtype=np.float64)
    param_grads = [None] * len(model.layers)
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        step = trace.steps[k]
        if isinstance(layer, (Dense, Conv2D)):
            param_grads[k] = layer.param_gradients(step.input, grad)
        else:
            param_grads[k] = {}
        grad = _layer_input_gradient(layer, step, grad)
    return grad, param_grads


def gradient(model: Model, x: np.ndarray, output_index: int) -> np.ndarray:
    """d logits[output_index] / d input, via the reverse-mode chain rule."""
    _check_output_index(model, output_index)
    _, trace = forward_traced(model, x)
    seed = np.zeros(model.output_size)
    seed[output_index] = 1.0
    grad, _ = backpropagate(model, trace, seed)
    return grad
