"""Command-line front end: explain, evaluate, context, verify-taylor, fixtures.

Every command is deterministic given its flags (randomness only enters
through explicit seeds), writes files named by its flags, and reports
human-readable results on stdout. Exit codes: 0 success, 2 usage error,
3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fixtures
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
from .evaluation import BoundingBox, PerturbationConfig, compare_methods_aopc, context_ratio
from .io import (
    load_image_pgm,
    load_model,
    load_tensor_csv,
    save_image_ppm,
    save_model,
    save_tensor_csv,
)
from .network import forward_traced
from .render import render_heatmap
from .rules import ALPHABETA, SENSITIVITY, RuleConfig, propagate, sensitivity_map
from .taylor import c_constancy_probe, verify_zplus_identity

USAGE_ERRORS = (InvalidConfig, ConfigError, BoxOutOfRange, SpecError, AllZero)
DATA_ERRORS = (
    ParseError, UnknownLayerType, ShapeMismatch, NonFiniteValue, TraceMismatch,
    NonNegativityViolated, InactiveNeuron, UnreachableEpsilon, DivergedTraining,
    FileNotFoundError, IsADirectoryError, NotADirectoryError,
)


def _load_input(path: str, model) -> np.ndarray:
    if path.endswith(".pgm"):
        values = load_image_pgm(path)
    else:
        values = load_tensor_csv(path)
    return fixtures.model_input(model, values)


def _rule_config(args) -> RuleConfig:
    if args.rule == ALPHABETA:
        return RuleConfig.alpha_beta(args.alpha, args.beta)
    if args.rule == SENSITIVITY:
        return RuleConfig.sensitivity()
    return RuleConfig.zplus()


def _pixel_plane(scores: np.ndarray) -> np.ndarray:
    return scores.sum(axis=0) if scores.ndim == 3 else scores


def cmd_explain(args) -> int:
    model = load_model(args.model)
    x = _load_input(args.input, model)
    config = _rule_config(args)
    logits, trace = forward_traced(model, x)
    value = float(logits[args.target])
    if config.rule == SENSITIVITY:
        scores = sensitivity_map(model, x, args.target)
        total = float(scores.sum())
        residual = abs(total - value)
        print(f"f(x)[{args.target}] = {value!r}")
        print(f"sum(scores) = {total!r} (sensitivity scores are not a decomposition)")
        print(f"conservation residual = {residual!r}")
    else:
        rmap = propagate(model, trace, args.target, config)
        scores = rmap.pixel_scores
        print(f"f(x)[{args.target}] = {value!r}")
        print(f"sum(R_p) = {float(scores.sum())!r}")
        print(f"conservation residual = {rmap.conservation_residual!r}")
        print(f"absorbed by degenerate denominators = {rmap.total_absorbed!r}")
        print(f"positive mass = {rmap.positive_mass!r}, negative mass = {rmap.negative_mass!r}")
    if args.out_scores:
        save_tensor_csv(scores, args.out_scores)
    if args.out_heatmap:
        save_image_ppm(render_heatmap(scores), args.out_heatmap)
    return 0


def _split_methods(text: str) -> list:
    """Split a comma list while keeping alphabeta(a,b) arguments together."""
    parts, current, depth = [], [], 0
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return [p.strip() for p in parts if p.strip()]


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    samples = fixtures.load_dataset(args.data)
    methods = _split_methods(args.methods)
    config = PerturbationConfig(
        steps=args.steps, patch_size=args.patch, baseline=args.baseline,
        order="relevance_desc", seed=args.seed,
    )
    samples = [
        fixtures.Sample(image=fixtures.model_input(model, s.image), label=s.label,
                        bbox=s.bbox, name=s.name)
        for s in samples
    ]
    comparison = compare_methods_aopc(model, samples, methods, config)

    report = {
        "baseline": args.baseline,
        "mean_aopc": comparison.mean_aopc(),
        "methods": list(comparison.methods),
        "patch_size": args.patch,
        "samples": len(samples),
        "seed": args.seed,
        "steps": args.steps,
    }
    out = Path(args.out)
    out.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    csv_path = Path(args.out_csv) if args.out_csv else out.with_suffix(".csv")
    lines = ["index,name,label,method,aopc,seed"]
    lines += [
        f"{r.index},{r.name},{r.label},{r.method},{r.aopc!r},{'' if r.seed is None else r.seed}"
        for r in comparison.rows
    ]
    csv_path.write_text("\n".join(lines) + "\n")
    for method, mean in sorted(report["mean_aopc"].items()):
        print(f"mean AOPC [{method}] = {mean!r}")
    print(f"report written to {out}, per-input rows to {csv_path}")
    return 0


def _parse_bbox(text: str) -> BoundingBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"expected --bbox x,y,w,h, got '{text}'")
    try:
        x, y, w, h = (int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bbox fields must be integers: {exc}") from exc
    return BoundingBox(x=x, y=y, width=w, height=h)


def cmd_context(args) -> int:
    model = load_model(args.model)
    x = _load_input(args.input, model)
    box = _parse_bbox(args.bbox)
    config = _rule_config(args)
    logits, trace = forward_traced(model, x)
    target = args.target if args.target is not None else int(np.argmax(logits))
    if config.rule == SENSITIVITY:
        scores = sensitivity_map(model, x, target)
    else:
        scores = propagate(model, trace, target, config).pixel_scores
    result = context_ratio(_pixel_plane(scores), box)
    print(f"target logit = {target}")
    print(f"inside mass = {result.inside_mass!r} over {result.inside_area} px")
    print(f"outside mass = {result.outside_mass!r} over {result.outside_area} px")
    print(f"outside/inside ratio = {result.ratio!r}")
    return 0


def cmd_verify_taylor(args) -> int:
    model = load_model(args.model)
    x = _load_input(args.input, model)
    _, trace = forward_traced(model, x)
    report = verify_zplus_identity(
        model, trace, args.layer, tolerance=args.tolerance,
        output_index=args.target, epsilon=args.epsilon,
    )
    for line in report.lines():
        print(line)
    if args.out_csv:
        rows = ["neuron,relevance,max_discrepancy"]
        rows += [f"{n.neuron_index},{n.relevance!r},{n.max_discrepancy!r}" for n in report.neurons]
        Path(args.out_csv).write_text("\n".join(rows) + "\n")
    if args.probe is not None:
        probe = c_constancy_probe(model, trace, args.layer, args.probe,
                                  output_index=args.target)
        for line in probe.lines():
            print(line)
    return 0


def cmd_fixtures(args) -> int:
    spec = fixtures.SyntheticSpec(
        image_size=args.image_size, patch_size=args.patch_size,
        noise_level=args.noise, seed=args.seed, sample_count=args.count,
    )
    samples = fixtures.generate_dataset(spec)
    manifest = fixtures.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out} (manifest {manifest})")
    if args.train:
        config = fixtures.TrainConfig(
            architecture=args.train,
            hidden_sizes=tuple(args.hidden),
            channels=tuple(args.channels),
            learning_rate=args.lr,
            epochs=args.epochs,
            seed=args.seed,
        )
        model = fixtures.train_toy(samples, config)
        print(f"train accuracy = {model.metadata['train_accuracy']!r}")
        if args.model_out:
            save_model(model, args.model_out)
            print(f"model written to {args.model_out}")
    return 0


def _add_rule_flags(sub):
    sub.add_argument("--rule", choices=["alphabeta", "zplus", "sensitivity"],
                     default="alphabeta")
    sub.add_argument("--alpha", type=float, default=2.0)
    sub.add_argument("--beta", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relprop",
        description="Pixel-wise relevance decomposition for small feedforward networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="attribute one prediction to input pixels")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    _add_rule_flags(p)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--out-heatmap")
    p.add_argument("--out-scores")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="mean AOPC per attribution method over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--methods", default="alphabeta(2,1),zplus,sensitivity,random")
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--patch", type=int, default=1)
    p.add_argument("--baseline", choices=["zero", "mean", "noise"], default="zero")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("context", help="positive relevance outside vs. inside a bounding box")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--bbox", required=True, help="x,y,w,h in pixels")
    _add_rule_flags(p)
    p.add_argument("--target", type=int)
    p.set_defaults(func=cmd_context)

    p = sub.add_parser("verify-taylor", help="check Taylor terms against the z+ rule")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--target", type=int)
    p.add_argument("--epsilon", type=float, default=1e-9)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--probe", type=float,
                   help="also run the c-constancy probe at this relative perturbation")
    p.add_argument("--out-csv")
    p.set_defaults(func=cmd_verify_taylor)

    p = sub.add_parser("fixtures", help="generate the synthetic dataset and train a toy model")
    p.add_argument("--out", required=True)
    p.add_argument("--image-size", type=int, default=8)
    p.add_argument("--patch-size", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", choices=["mlp", "convnet"])
    p.add_argument("--hidden", type=int, nargs="+", default=[16])
    p.add_argument("--channels", type=int, nargs="+", default=[4])
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"relprop {args.command}: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"relprop {args.command}: {exc}", file=sys.stderr)
        return 3
    except RelpropError as exc:
        print(f"relprop {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
