"""Numerical verification of the first-order Taylor view of the z+ rule.

For a ReLU neuron whose relevance factors as R_j = x_j * c_j with c_j > 0,
one can define a "relevance neuron" max(0, sum_i x_i w_i c_j + b_j c_j) and
expand it to first order around a reference point found by scaling down the
positively contributing inputs until the pre-activation reaches a small
positive level. The first-order terms have a closed form identical to the
z+ redistribution, which this module checks three ways: Taylor terms at the
reference point, the closed-form fractions, and the live propagation rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InactiveNeuron,
    InvalidConfig,
    NonNegativityViolated,
    ShapeMismatch,
    UnreachableEpsilon,
)
from .layers import Dense
from .network import ActivationTrace, Model, forward_traced
from .rules import RuleConfig, _dense_backward, propagate


def relevance_neuron_preactivation(x, w, b: float, c: float) -> float:
    """Pre-activation sum_i x_i w_i c + b c of the scaled neuron."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return float((x @ w + b) * c)


@dataclass(frozen=True, eq=False)
class TaylorReference:
    """Root-point data for one relevance neuron.

    ``reference_point`` lies on the search line obtained by scaling down the
    inputs selected by ``direction_mask`` (those with w_i c > 0) by the factor
    ``t_star``; its pre-activation equals ``epsilon``.
    """

    neuron_index: int
    c: float
    t_star: float
    reference_point: np.ndarray
    epsilon: float
    direction_mask: np.ndarray


def find_reference(x, w, b: float, c: float, epsilon: float = 1e-9,
                   neuron_index: int = 0) -> TaylorReference:
    """Intersect the search line with the pre-activation level ``epsilon``.

    Raises InactiveNeuron when the neuron's scaled pre-activation is not
    above ``epsilon``, and UnreachableEpsilon when no positively
    contributing input exists to deactivate.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape or x.ndim != 1:
        raise ShapeMismatch(f"x and w must be equal-length vectors, got {x.shape} and {w.shape}")
    if c <= 0:
        raise InvalidConfig(f"the constant c must be positive, got {c}")
    if epsilon <= 0:
        raise InvalidConfig(f"epsilon must be positive, got {epsilon}")

    preact = relevance_neuron_preactivation(x, w, b, c)
    if preact <= epsilon:
        raise InactiveNeuron(
            f"pre-activation {preact} not above epsilon={epsilon}; nothing to decompose"
        )
    mask = (w * c) > 0.0
    descent = float((x[mask] * w[mask]).sum() * c)
    if descent <= 0.0:
        raise UnreachableEpsilon(
            "no positive contributions to deactivate; the search line never reaches epsilon"
        )
    t_star = (preact - epsilon) / descent
    reference = x * (1.0 - t_star * mask)
    return TaylorReference(
        neuron_index=neuron_index,
        c=float(c),
        t_star=float(t_star),
        reference_point=reference,
        epsilon=float(epsilon),
        direction_mask=mask,
    )


def taylor_term(ref: TaylorReference, x, w, b: float) -> np.ndarray:
    """First-order terms w_i c (x_i - ref_i), the per-input relevance messages.

    The gradient of the relevance neuron at the reference point is w_i c
    because the pre-activation there equals epsilon > 0 (the ReLU is active).
    The bias enters the expansion point, not the terms themselves.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return w * ref.c * (x - ref.reference_point)


def zplus_closed_form(x, w, relevance: float) -> np.ndarray:
    """x_i w_i+ / sum_i x_i w_i+ * R_j, with 0/0 := 0."""
    x = np.asarray(x, dtype=np.float64)
    numer = x * np.maximum(np.asarray(w, dtype=np.float64), 0.0)
    total = numer.sum()
    if total == 0.0:
        return np.zeros_like(numer)
    return numer / total * relevance


@dataclass(frozen=True)
class NeuronAgreement:
    neuron_index: int
    relevance: float
    max_discrepancy: float

    @property
    def relative_discrepancy(self) -> float:
        return self.max_discrepancy / abs(self.relevance)


@dataclass(frozen=True, eq=False)
class ZPlusIdentityReport:
    layer_index: int
    epsilon: float
    tolerance: float
    neurons: tuple
    skipped_inactive: int
    skipped_unreachable: int

    @property
    def max_discrepancy(self) -> float:
        return max((n.max_discrepancy for n in self.neurons), default=0.0)

    @property
    def max_relative_discrepancy(self) -> float:
        return max((n.relative_discrepancy for n in self.neurons), default=0.0)

    def passed(self) -> bool:
        return all(n.max_discrepancy <= self.tolerance * abs(n.relevance) for n in self.neurons)

    def lines(self):
        yield (f"z+ identity check, layer {self.layer_index}, epsilon={self.epsilon:g}, "
               f"tolerance={self.tolerance:g} * |R_j|")
        for n in self.neurons:
            yield (f"  neuron {n.neuron_index}: R_j={n.relevance:.6g} "
                   f"max discrepancy={n.max_discrepancy:.3e} "
                   f"({n.relative_discrepancy:.3e} relative)")
        yield (f"  active={len(self.neurons)} inactive={self.skipped_inactive} "
               f"unreachable={self.skipped_unreachable} "
               f"max discrepancy={self.max_discrepancy:.3e} -> "
               f"{'OK' if self.passed() else 'FAILED'}")


def verify_zplus_identity(model: Model, trace: ActivationTrace, layer_index: int,
                          tolerance: float = 1e-6, output_index: int | None = None,
                          epsilon: float = 1e-9) -> ZPlusIdentityReport:
    """Compare Taylor terms, closed form, and the live z+ rule per neuron.

    The upper-layer relevance comes from an actual z+ propagation of the
    trace. Neurons with x_j = 0 or R_j <= 0 violate the positive product
    assumption and are skipped (their messages are zero on every path).
    """
    trace.validate_for(model)
    layer = model.layers[layer_index]
    if not isinstance(layer, Dense):
        raise InvalidConfig(f"layer {layer_index} is {layer.kind}, need a dense layer")
    x = trace.steps[layer_index].input
    if np.any(x < 0.0):
        raise NonNegativityViolated(f"layer {layer_index} input has negative activations")

    if output_index is None:
        output_index = int(np.argmax(trace.output))
    rmap = propagate(model, trace, output_index, RuleConfig.zplus())
    upper = rmap.layer_relevance[layer_index + 1]

    preacts = trace.steps[layer_index].output
    activations = np.maximum(preacts, 0.0)

    neurons = []
    skipped_inactive = 0
    skipped_unreachable = 0
    for j in range(layer.weights.shape[1]):
        r_j = float(upper[j])
        if activations[j] <= 0.0 or r_j <= 0.0:
            skipped_inactive += 1
            continue
        w_j = layer.weights[:, j]
        b_j = float(layer.bias[j])
        c_j = r_j / float(activations[j])
        try:
            ref = find_reference(x, w_j, b_j, c_j, epsilon=epsilon, neuron_index=j)
        except (InactiveNeuron, UnreachableEpsilon):
            skipped_unreachable += 1
            continue
        taylor = taylor_term(ref, x, w_j, b_j)
        closed = zplus_closed_form(x, w_j, r_j)
        one_hot = np.zeros_like(upper)
        one_hot[j] = r_j
        live, _ = _dense_backward(layer, x, one_hot, RuleConfig.zplus())
        disc = max(
            float(np.abs(taylor - closed).max()),
            float(np.abs(taylor - live).max()),
            float(np.abs(closed - live).max()),
        )
        neurons.append(NeuronAgreement(neuron_index=j, relevance=r_j, max_discrepancy=disc))

    return ZPlusIdentityReport(
        layer_index=layer_index,
        epsilon=epsilon,
        tolerance=tolerance,
        neurons=tuple(neurons),
        skipped_inactive=skipped_inactive,
        skipped_unreachable=skipped_unreachable,
    )


@dataclass(frozen=True)
class CConstancyEntry:
    neuron_index: int
    activation: float
    c_before: float
    c_after: float

    @property
    def relative_change(self) -> float:
        return abs(self.c_after - self.c_before) / abs(self.c_before)


@dataclass(frozen=True, eq=False)
class CConstancyReport:
    layer_index: int
    perturbation: float
    entries: tuple
    skipped_small_activation: int
    skipped_zero_c: int

    def relative_changes(self) -> np.ndarray:
        return np.array([e.relative_change for e in self.entries])

    @property
    def median_relative_change(self) -> float:
        changes = self.relative_changes()
        return float(np.median(changes)) if changes.size else 0.0

    @property
    def max_relative_change(self) -> float:
        changes = self.relative_changes()
        return float(changes.max()) if changes.size else 0.0

    def lines(self):
        yield (f"c-constancy probe, layer {self.layer_index}, "
               f"perturbation={self.perturbation:g}")
        for e in self.entries:
            yield (f"  neuron {e.neuron_index}: x={e.activation:.6g} "
                   f"c={e.c_before:.6g} -> {e.c_after:.6g} "
                   f"(rel change {e.relative_change:.3e})")
        yield (f"  probed={len(self.entries)} "
               f"skipped(small x)={self.skipped_small_activation} "
               f"skipped(c=0)={self.skipped_zero_c} "
               f"median rel change={self.median_relative_change:.3e} "
               f"max={self.max_relative_change:.3e}")


def c_constancy_probe(model: Model, trace: ActivationTrace, layer_index: int,
                      perturbation: float, threshold: float = 1e-6,
                      output_index: int | None = None) -> CConstancyReport:
    """Measure how much c_i = R_i / x_i moves when x_i is nudged.

    Diagnostic only: the probe perturbs each sufficiently large activation
    at the layer input by the given relative amount, re-runs the forward
    pass and the z+ propagation from that layer up, and reports the
    distribution of relative changes in c_i.
    """
    trace.validate_for(model)
    if len(model.layers) < 2:
        raise InvalidConfig("the probe needs a network of at least two layers")
    if not isinstance(model.layers[layer_index], Dense):
        raise InvalidConfig(f"layer {layer_index} is not a dense layer")
    if output_index is None:
        output_index = int(np.argmax(trace.output))

    x = trace.steps[layer_index].input
    tail = Model(input_shape=x.shape, layers=model.layers[layer_index:])

    def c_at_input(values: np.ndarray) -> np.ndarray:
        _, tail_trace = forward_traced(tail, values)
        rmap = propagate(tail, tail_trace, output_index, RuleConfig.zplus())
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(values != 0.0, rmap.pixel_scores / values, 0.0)

    base_c = c_at_input(x)
    entries = []
    skipped_small = 0
    skipped_zero_c = 0
    for i in range(x.size):
        if x[i] <= threshold:
            skipped_small += 1
            continue
        if base_c[i] == 0.0:
            skipped_zero_c += 1
            continue
        bumped = x.copy()
        bumped[i] *= 1.0 + perturbation
        entries.append(CConstancyEntry(
            neuron_index=i,
            activation=float(x[i]),
            c_before=float(base_c[i]),
            c_after=float(c_at_input(bumped)[i]),
        ))

    return CConstancyReport(
        layer_index=layer_index,
        perturbation=perturbation,
        entries=tuple(entries),
        skipped_small_activation=skipped_small,
        skipped_zero_c=skipped_zero_c,
    )
