"""Quantitative explanation evaluation.

The perturbation benchmark removes square patches from the input in the
order suggested by an attribution map (or at random), re-runs the model
after each removal, and averages the score drops: a large area over the
perturbation curve (AOPC) means the attribution ordered the evidence well.
Context analysis aggregates positive relevance inside and outside a
bounding box; heatmap sparsity is the Gini coefficient of the absolute
relevance values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import AllZero, BoxOutOfRange, ConfigError, ShapeMismatch
from .network import Model, forward, forward_traced
from .rules import ALPHABETA, SENSITIVITY, ZPLUS, RuleConfig, propagate, sensitivity_map

BASELINE_ZERO = "zero"
BASELINE_MEAN = "mean"
BASELINE_NOISE = "noise"

ORDER_RELEVANCE = "relevance_desc"
ORDER_SENSITIVITY = "sensitivity_desc"
ORDER_RANDOM = "random"

RANDOM_METHOD = "random"


@dataclass(frozen=True)
class PerturbationConfig:
    steps: int
    patch_size: int = 1
    baseline: str = BASELINE_ZERO
    order: str = ORDER_RELEVANCE
    seed: int | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.baseline not in (BASELINE_ZERO, BASELINE_MEAN, BASELINE_NOISE):
            raise ConfigError(f"unknown baseline '{self.baseline}'")
        if self.order not in (ORDER_RELEVANCE, ORDER_SENSITIVITY, ORDER_RANDOM):
            raise ConfigError(f"unknown order '{self.order}'")
        if self.seed is None and (self.order == ORDER_RANDOM or self.baseline == BASELINE_NOISE):
            raise ConfigError("random order and noise baseline require an explicit seed")


@dataclass(frozen=True, eq=False)
class AopcResult:
    """Drop curve f(x0) - f(xk) for k = 0..steps plus its mean."""

    drops: tuple
    aopc: float
    method: str
    patch_size: int
    patches: tuple
    seed: int | None = None


def _spatial_view(x: np.ndarray):
    """Map an input onto a (channels, height, width) view; 1-D inputs become one row."""
    if x.ndim == 1:
        return x.reshape(1, 1, x.size)
    if x.ndim == 2:
        return x.reshape((1,) + x.shape)
    if x.ndim == 3:
        return x
    raise ShapeMismatch(f"cannot interpret shape {x.shape} as an image")


def _patch_positions(h: int, w: int, p: int):
    return [(r, c) for r in range(h - p + 1) for c in range(w - p + 1)]


def _disjoint(a, b, p: int) -> bool:
    return abs(a[0] - b[0]) >= p or abs(a[1] - b[1]) >= p


def select_patches(score_map: np.ndarray | None, shape, config: PerturbationConfig):
    """Greedy non-overlapping patch selection in the configured order.

    Ties in patch score break lexicographically by (row, col) so runs are
    platform-independent. Raises ConfigError when fewer than ``steps``
    disjoint patches fit.
    """
    h, w = shape
    p = config.patch_size
    if config.steps * p * p > h * w:
        raise ConfigError(
            f"{config.steps} patches of size {p}x{p} exceed the {h * w} available pixels"
        )
    if p > h or p > w:
        raise ConfigError(f"patch size {p} larger than image {h}x{w}")
    positions = _patch_positions(h, w, p)
    if config.order == ORDER_RANDOM:
        rng = np.random.default_rng(config.seed)
        ordered = [positions[i] for i in rng.permutation(len(positions))]
    else:
        if score_map is None:
            raise ConfigError(f"order '{config.order}' needs a score map")
        if score_map.shape != (h, w):
            raise ShapeMismatch(f"score map shape {score_map.shape} != image shape {(h, w)}")
        sums = sliding_window_view(score_map, (p, p)).sum(axis=(2, 3))
        ordered = sorted(positions, key=lambda rc: (-sums[rc[0], rc[1]], rc[0], rc[1]))
    chosen = []
    for pos in ordered:
        if all(_disjoint(pos, prev, p) for prev in chosen):
            chosen.append(pos)
            if len(chosen) == config.steps:
                return chosen
    raise ConfigError(
        f"only {len(chosen)} disjoint {p}x{p} patches fit, {config.steps} requested"
    )


def aopc_curve(model: Model, x, scores: np.ndarray | None,
               config: PerturbationConfig, output_index: int,
               method: str | None = None) -> AopcResult:
    """Perturb patches in order and record the drop curve.

    ``scores`` is the attribution map guiding the order (same shape as the
    input; channels are summed for patch scoring) and may be None for the
    random order. AOPC is the mean of the steps+1 recorded drops, the
    zeroth being 0 by definition.
    """
    x = np.asarray(x, dtype=np.float64)
    view = _spatial_view(x)
    h, w = view.shape[1:]
    score_map = None
    if config.order != ORDER_RANDOM:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != x.shape:
            raise ShapeMismatch(f"scores shape {scores.shape} != input shape {x.shape}")
        score_map = _spatial_view(scores).sum(axis=0)
    patches = select_patches(score_map, (h, w), config)

    rng = np.random.default_rng(config.seed) if config.baseline == BASELINE_NOISE else None
    base_value = float(x.mean()) if config.baseline == BASELINE_MEAN else 0.0

    f0 = float(forward(model, x)[output_index])
    work = view.copy()
    p = config.patch_size
    drops = [0.0]
    for r, c in patches:
        if config.baseline == BASELINE_NOISE:
            work[:, r:r + p, c:c + p] = rng.uniform(0.0, 1.0, size=work[:, r:r + p, c:c + p].shape)
        else:
            work[:, r:r + p, c:c + p] = base_value
        f_k = float(forward(model, work.reshape(x.shape))[output_index])
        drops.append(f0 - f_k)

    drops = tuple(drops)
    return AopcResult(
        drops=drops,
        aopc=float(sum(drops) / len(drops)),
        method=method or config.order,
        patch_size=p,
        patches=tuple(patches),
        seed=config.seed,
    )


def parse_method(spec: str):
    """Parse a method label: zplus, sensitivity, random, alphabeta[(a,b)]."""
    text = spec.strip().lower()
    if text in (ZPLUS, SENSITIVITY, RANDOM_METHOD):
        return text, None
    if text == ALPHABETA:
        return f"{ALPHABETA}(2,1)", RuleConfig.alpha_beta(2.0, 1.0)
    if text.startswith(ALPHABETA + "(") and text.endswith(")"):
        inner = text[len(ALPHABETA) + 1:-1]
        parts = inner.split(",")
        if len(parts) != 2:
            raise ConfigError(f"expected alphabeta(alpha,beta), got '{spec}'")
        alpha, beta = (float(v) for v in parts)
        cfg = RuleConfig.alpha_beta(alpha, beta)
        return f"{ALPHABETA}({alpha:g},{beta:g})", cfg
    raise ConfigError(f"unknown method '{spec}'")


def score_map_for_method(model: Model, x, target: int, method: str) -> np.ndarray | None:
    """Attribution map driving the perturbation order; None for random."""
    label, cfg = parse_method(method)
    if label == RANDOM_METHOD:
        return None
    if label == SENSITIVITY:
        return sensitivity_map(model, x, target)
    if cfg is None:
        cfg = RuleConfig.zplus()
    _, trace = forward_traced(model, x)
    return propagate(model, trace, target, cfg).pixel_scores


@dataclass(frozen=True)
class AopcRow:
    index: int
    name: str
    label: int
    method: str
    aopc: float
    seed: int | None


@dataclass(frozen=True, eq=False)
class MethodComparison:
    methods: tuple
    rows: tuple

    def per_method(self, method: str) -> np.ndarray:
        return np.array([row.aopc for row in self.rows if row.method == method])

    def mean_aopc(self) -> dict:
        means = {}
        for method in self.methods:
            values = self.per_method(method)
            if values.size:
                means[method] = float(values.mean())
        return means


def compare_methods_aopc(model: Model, dataset, methods, config: PerturbationConfig,
                         ) -> MethodComparison:
    """Mean AOPC per attribution method over a dataset.

    Each sample is explained at its own label logit. The random method draws
    one ordering per sample from seed + sample index, recorded in the rows,
    so the comparison is reproducible input by input.
    """
    labels = [parse_method(m)[0] for m in methods]
    rows = []
    for index, sample in enumerate(dataset):
        if hasattr(sample, "image"):
            x, target, name = sample.image, sample.label, sample.name
        else:
            x, target = sample
            name = f"input{index}"
        for method, label in zip(methods, labels):
            if label == RANDOM_METHOD:
                seed = (config.seed or 0) + index
                run_cfg = replace(config, order=ORDER_RANDOM, seed=seed)
                scores = None
            else:
                base_seed = config.seed if config.baseline == BASELINE_NOISE else None
                order = ORDER_SENSITIVITY if label == SENSITIVITY else ORDER_RELEVANCE
                run_cfg = replace(config, order=order, seed=base_seed)
                scores = score_map_for_method(model, x, target, method)
            result = aopc_curve(model, x, scores, run_cfg, target, method=label)
            rows.append(AopcRow(index=index, name=name, label=int(target),
                                method=label, aopc=result.aopc, seed=result.seed))
    return MethodComparison(methods=tuple(labels), rows=tuple(rows))


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise BoxOutOfRange(f"box area must be >= 1, got {self.width}x{self.height}")
        if self.x < 0 or self.y < 0:
            raise BoxOutOfRange(f"box origin must be nonnegative, got ({self.x}, {self.y})")

    def check_inside(self, height: int, width: int) -> None:
        if self.x + self.width > width or self.y + self.height > height:
            raise BoxOutOfRange(
                f"box {self} does not fit inside a {width}x{height} image"
            )


@dataclass(frozen=True)
class ContextRatio:
    outside_mass: float
    inside_mass: float
    outside_area: int
    inside_area: int
    ratio: float


def context_ratio(relevance: np.ndarray, box: BoundingBox) -> ContextRatio:
    """Area-normalized positive-relevance ratio outside vs. inside a box.

    Negative relevance is excluded from both masses. The ratio is 0 when no
    positive relevance lies outside, and +inf when evidence exists outside
    an empty box interior.
    """
    relevance = np.asarray(relevance, dtype=np.float64)
    if relevance.ndim != 2:
        raise ShapeMismatch(f"context ratio needs a 2-D map, got shape {relevance.shape}")
    h, w = relevance.shape
    box.check_inside(h, w)

    positive = np.maximum(relevance, 0.0)
    mask = np.zeros((h, w), dtype=bool)
    mask[box.y:box.y + box.height, box.x:box.x + box.width] = True
    inside_mass = float(positive[mask].sum())
    outside_mass = float(positive[~mask].sum())
    inside_area = box.width * box.height
    outside_area = h * w - inside_area

    if outside_area == 0 or outside_mass == 0.0:
        ratio = 0.0
    elif inside_mass == 0.0:
        ratio = float("inf")
    else:
        ratio = (outside_mass / outside_area) / (inside_mass / inside_area)
    return ContextRatio(
        outside_mass=outside_mass,
        inside_mass=inside_mass,
        outside_area=outside_area,
        inside_area=inside_area,
        ratio=ratio,
    )


def heatmap_sparsity(relevance: np.ndarray) -> float:
    """Gini coefficient of |R_p|: 0 for uniform maps, 1 - 1/n for one-hot."""
    flat = np.abs(np.asarray(relevance, dtype=np.float64)).reshape(-1)
    if flat.size == 0:
        raise ShapeMismatch("sparsity of an empty map is undefined")
    total = flat.sum()
    if total == 0.0:
        raise AllZero("sparsity of an all-zero map is undefined")
    ranked = np.sort(flat)
    n = flat.size
    weighted = (np.arange(1, n + 1) * ranked).sum()
    return float(2.0 * weighted / (n * total) - (n + 1) / n)
