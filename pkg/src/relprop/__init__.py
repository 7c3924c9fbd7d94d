"""Pixel-wise relevance decomposition for small feedforward networks.

The package bundles a minimal inference engine with activation tracing and
reverse-mode gradients, backward relevance propagation rules (alpha-beta and
z+) with conservation accounting, a numerical check of their first-order
Taylor interpretation, perturbation-based evaluation (AOPC), context-ratio
measurement, and deterministic synthetic fixtures for end-to-end runs.
"""

from .errors import (
    AllZero,
    BoxOutOfRange,
    ConfigError,
    DivergedTraining,
    InactiveNeuron,
    InvalidConfig,
    NonFiniteValue,
    NonNegativityViolated,
    ParseError,
    RelpropError,
    ShapeMismatch,
    SpecError,
    TraceMismatch,
    UnknownLayerType,
    UnreachableEpsilon,
)
from .evaluation import (
    AopcResult,
    BoundingBox,
    ContextRatio,
    MethodComparison,
    PerturbationConfig,
    aopc_curve,
    compare_methods_aopc,
    context_ratio,
    heatmap_sparsity,
    parse_method,
    score_map_for_method,
    select_patches,
)
from .fixtures import (
    Sample,
    SyntheticSpec,
    TrainConfig,
    accuracy,
    build_model,
    generate_dataset,
    load_dataset,
    model_input,
    save_dataset,
    train_toy,
)
from .io import (
    load_image_pgm,
    load_image_ppm,
    load_model,
    load_tensor_csv,
    save_image_pgm,
    save_image_ppm,
    save_model,
    save_tensor_csv,
)
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, SumPool2D
from .network import (
    ActivationTrace,
    Model,
    backpropagate,
    forward,
    forward_traced,
    gradient,
)
from .render import render_heatmap
from .rules import (
    ALPHABETA,
    SENSITIVITY,
    ZPLUS,
    RelevanceMap,
    RuleConfig,
    linear_decompose,
    propagate,
    sensitivity_map,
)
from .taylor import (
    CConstancyReport,
    TaylorReference,
    ZPlusIdentityReport,
    c_constancy_probe,
    find_reference,
    relevance_neuron_preactivation,
    taylor_term,
    verify_zplus_identity,
    zplus_closed_form,
)

__version__ = "0.1.0"
