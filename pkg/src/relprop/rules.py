"""Backward relevance propagation: alpha-beta rule, z+ rule, sensitivity.

The alpha-beta rule redistributes the relevance R_j of each neuron onto its
inputs proportionally to the positive and negative parts of the input
contributions x_i * w_ij, weighted alpha and -beta; alpha - beta = 1 makes
the redistribution conserving. The z+ rule redistributes proportionally to
x_i * max(0, w_ij) and coincides with alpha=1, beta=0 whenever the traced
activations are nonnegative.

Neurons whose entire positive (or negative) contribution pool vanishes
cannot redistribute that share: the 0/0 := 0 convention applies, the share
is dropped, and the dropped amount is reported per layer in
``RelevanceMap.absorbed`` so conservation remains checkable:

    sum(R_lower) + absorbed == sum(R_upper)      (per layer)
    sum(pixel scores) + total absorbed == f(x)   (globally)

Pooling layers are handled by winner-take-all (max pooling, via the argmax
recorded in the trace) and by redistribution proportional to the positive
part of the pooled activations (sum pooling). ReLU and flatten pass
relevance through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, ShapeMismatch
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, SumPool2D, _windows
from .network import ActivationTrace, Model, _check_output_index, gradient

ALPHABETA = "alphabeta"
ZPLUS = "zplus"
SENSITIVITY = "sensitivity"


@dataclass(frozen=True)
class RuleConfig:
    rule: str = ALPHABETA
    alpha: float = 2.0
    beta: float = 1.0
    epsilon_stab: float = 1e-12

    def __post_init__(self):
        if self.rule not in (ALPHABETA, ZPLUS, SENSITIVITY):
            raise InvalidConfig(f"unknown rule '{self.rule}'")
        if self.epsilon_stab < 0:
            raise InvalidConfig("epsilon_stab must be >= 0")
        if self.rule == ALPHABETA:
            if self.alpha < 1 or self.beta < 0:
                raise InvalidConfig(f"need alpha >= 1 and beta >= 0, got ({self.alpha}, {self.beta})")
            if abs(self.alpha - self.beta - 1.0) > 1e-12:
                raise InvalidConfig(
                    f"alpha - beta must equal 1, got {self.alpha} - {self.beta}"
                )

    @classmethod
    def alpha_beta(cls, alpha: float, beta: float, epsilon_stab: float = 1e-12) -> "RuleConfig":
        return cls(rule=ALPHABETA, alpha=alpha, beta=beta, epsilon_stab=epsilon_stab)

    @classmethod
    def zplus(cls, epsilon_stab: float = 1e-12) -> "RuleConfig":
        return cls(rule=ZPLUS, alpha=1.0, beta=0.0, epsilon_stab=epsilon_stab)

    @classmethod
    def sensitivity(cls) -> "RuleConfig":
        return cls(rule=SENSITIVITY, alpha=1.0, beta=0.0)

    def label(self) -> str:
        if self.rule == ALPHABETA:
            return f"alphabeta({self.alpha:g},{self.beta:g})"
        return self.rule


@dataclass(frozen=True, eq=False)
class RelevanceMap:
    """Per-layer relevance aligned with the activations of one forward pass.

    ``layer_relevance[k]`` has the shape of activation ``k`` (0 = model
    input, last = logits). ``absorbed[k]`` is the relevance dropped by
    degenerate denominators while redistributing through layer ``k``.
    """

    layer_relevance: tuple
    absorbed: tuple
    output_index: int
    initial_relevance: float
    config: RuleConfig

    @property
    def pixel_scores(self) -> np.ndarray:
        return self.layer_relevance[0]

    def layer_sums(self) -> np.ndarray:
        return np.array([r.sum() for r in self.layer_relevance])

    @property
    def total_absorbed(self) -> float:
        return float(sum(self.absorbed))

    @property
    def conservation_residual(self) -> float:
        return float(abs(self.pixel_scores.sum() - self.initial_relevance))

    @property
    def positive_mass(self) -> float:
        return float(np.maximum(self.pixel_scores, 0.0).sum())

    @property
    def negative_mass(self) -> float:
        return float(np.minimum(self.pixel_scores, 0.0).sum())


def _guarded(denom: np.ndarray, eps: float, sign: float) -> np.ndarray:
    # replace exactly-zero denominators so degenerate columns divide to zero;
    # nonzero denominators are left untouched to keep conservation exact
    fill = sign * eps if eps > 0 else 1.0
    return np.where(denom == 0.0, fill, denom)


def _dense_backward(layer: Dense, x, relevance, cfg: RuleConfig):
    if cfg.rule == ZPLUS:
        z = x[:, None] * np.maximum(layer.weights, 0.0)
        denom = z.sum(axis=0)
        lower = (z / _guarded(denom, cfg.epsilon_stab, 1.0)) @ relevance
        absorbed = relevance[denom == 0.0].sum()
        return lower, float(absorbed)
    z = x[:, None] * layer.weights
    pos, neg = np.maximum(z, 0.0), np.minimum(z, 0.0)
    pos_sum, neg_sum = pos.sum(axis=0), neg.sum(axis=0)
    frac = cfg.alpha * pos / _guarded(pos_sum, cfg.epsilon_stab, 1.0) \
        - cfg.beta * neg / _guarded(neg_sum, cfg.epsilon_stab, -1.0)
    lower = frac @ relevance
    absorbed = cfg.alpha * relevance[pos_sum == 0.0].sum() \
        - cfg.beta * relevance[neg_sum == 0.0].sum()
    return lower, float(absorbed)


def _scatter_windows(messages, x, kh, kw, stride):
    """Accumulate per-window messages (ch, out_h, out_w, kh, kw) onto the input grid."""
    lower = np.zeros_like(x)
    for u in range(messages.shape[1]):
        for v in range(messages.shape[2]):
            lower[:, u * stride:u * stride + kh, v * stride:v * stride + kw] += messages[:, u, v]
    return lower


def _conv_backward(layer: Conv2D, x, relevance, cfg: RuleConfig):
    _, _, kh, kw = layer.kernel.shape
    win = _windows(x, kh, kw, layer.stride)  # (cin, oh, ow, kh, kw)
    kernel = layer.kernel if cfg.rule != ZPLUS else np.maximum(layer.kernel, 0.0)
    # z[o, cin, u, v, i, j] = window * kernel, one slab per output channel
    z = win[None, :, :, :, :, :] * kernel[:, :, None, None, :, :]
    if cfg.rule == ZPLUS:
        denom = z.sum(axis=(1, 4, 5))
        frac = z / _guarded(denom, cfg.epsilon_stab, 1.0)[:, None, :, :, None, None]
        weighted = frac * relevance[:, None, :, :, None, None]
        absorbed = relevance[denom == 0.0].sum()
    else:
        pos, neg = np.maximum(z, 0.0), np.minimum(z, 0.0)
        pos_sum, neg_sum = pos.sum(axis=(1, 4, 5)), neg.sum(axis=(1, 4, 5))
        frac = cfg.alpha * pos / _guarded(pos_sum, cfg.epsilon_stab, 1.0)[:, None, :, :, None, None] \
            - cfg.beta * neg / _guarded(neg_sum, cfg.epsilon_stab, -1.0)[:, None, :, :, None, None]
        weighted = frac * relevance[:, None, :, :, None, None]
        absorbed = cfg.alpha * relevance[pos_sum == 0.0].sum() \
            - cfg.beta * relevance[neg_sum == 0.0].sum()
    return _scatter_windows(weighted.sum(axis=0), x, kh, kw, layer.stride), float(absorbed)


def _sumpool_backward(layer: SumPool2D, x, relevance, cfg: RuleConfig):
    ph, pw = layer.window
    win = _windows(x, ph, pw, layer.stride)
    pos = np.maximum(win, 0.0)
    denom = pos.sum(axis=(3, 4))
    frac = pos / _guarded(denom, cfg.epsilon_stab, 1.0)[:, :, :, None, None]
    messages = frac * relevance[:, :, :, None, None]
    absorbed = relevance[denom == 0.0].sum()
    return _scatter_windows(messages, x, ph, pw, layer.stride), float(absorbed)


def _maxpool_backward(layer: MaxPool2D, x, relevance, argmax):
    lower = np.zeros_like(x)
    np.add.at(lower, layer.winner_indices(argmax), relevance)
    return lower, 0.0


def propagate(model: Model, trace: ActivationTrace, output_index: int,
              config: RuleConfig) -> RelevanceMap:
    """Propagate relevance from the selected logit down to the input pixels.

    Relevance is initialized to the raw logit value f(x) at ``output_index``
    and zero elsewhere, so global conservation reads sum(R_p) = f(x).
    """
    if config.rule == SENSITIVITY:
        raise InvalidConfig("sensitivity is not a propagation rule; use sensitivity_map")
    trace.validate_for(model)
    _check_output_index(model, output_index)

    logits = trace.output
    relevance = np.zeros_like(logits)
    relevance[output_index] = logits[output_index]
    initial = float(logits[output_index])

    per_layer = [relevance]
    absorbed = []
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        step = trace.steps[k]
        upper = per_layer[0]
        if isinstance(layer, Dense):
            lower, lost = _dense_backward(layer, step.input, upper, config)
        elif isinstance(layer, Conv2D):
            lower, lost = _conv_backward(layer, step.input, upper, config)
        elif isinstance(layer, SumPool2D):
            lower, lost = _sumpool_backward(layer, step.input, upper, config)
        elif isinstance(layer, MaxPool2D):
            lower, lost = _maxpool_backward(layer, step.input, upper, step.pool_argmax)
        elif isinstance(layer, Flatten):
            lower, lost = upper.reshape(step.input.shape), 0.0
        elif isinstance(layer, ReLU):
            lower, lost = upper, 0.0
        else:
            raise InvalidConfig(f"no propagation rule for layer type {type(layer).__name__}")
        per_layer.insert(0, lower)
        absorbed.insert(0, lost)

    return RelevanceMap(
        layer_relevance=tuple(per_layer),
        absorbed=tuple(absorbed),
        output_index=output_index,
        initial_relevance=initial,
        config=config,
    )


def sensitivity_map(model: Model, x, output_index: int) -> np.ndarray:
    """Squared partial derivatives (d f / d x_p)^2 per input element."""
    return gradient(model, x, output_index) ** 2


def linear_decompose(weights, bias: float, x) -> np.ndarray:
    """Decompose a linear score f(x) = sum_p x_p w_p + b into R_p = x_p w_p.

    The scores sum to f(x) - b exactly; a nonzero bias is the unredistributed
    remainder.
    """
    weights = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if weights.shape != x.shape:
        raise ShapeMismatch(f"weights shape {weights.shape} != input shape {x.shape}")
    return x * weights
