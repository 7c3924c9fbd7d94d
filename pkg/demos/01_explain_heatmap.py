"""Train the toy classifier and explain one of its predictions pixel by pixel.

Walks the full pipeline: synthetic dataset -> SGD training -> forward pass
with activation tracing -> backward relevance propagation -> rendered
heatmaps. Along the way it prints the conservation arithmetic that makes
the relevance scores a decomposition of the logit value.
"""

from pathlib import Path

import numpy as np

from relprop import (
    RuleConfig,
    SyntheticSpec,
    TrainConfig,
    forward_traced,
    generate_dataset,
    propagate,
    render_heatmap,
    save_image_pgm,
    save_image_ppm,
    sensitivity_map,
    train_toy,
)

out = Path("demos/out")
out.mkdir(parents=True, exist_ok=True)

print("== data and model ==")
dataset = generate_dataset(SyntheticSpec(noise_level=0.1))
model = train_toy(dataset, TrainConfig())
print(f"trained {model.metadata['name']} to "
      f"{model.metadata['train_accuracy']:.1%} train accuracy")

sample = next(s for s in dataset if s.label == 1)
save_image_pgm(sample.image, out / "input.pgm")
print(f"explaining {sample.name}: planted patch at "
      f"x={sample.bbox.x}, y={sample.bbox.y}")

logits, trace = forward_traced(model, sample.image)
print(f"logits = {np.round(logits, 4)}, explaining class {sample.label}")

print("\n== relevance propagation ==")
for config in (RuleConfig.alpha_beta(2.0, 1.0), RuleConfig.zplus()):
    rmap = propagate(model, trace, sample.label, config)
    print(f"[{config.label()}]")
    print(f"  f(x)          = {rmap.initial_relevance:+.6f}")
    print(f"  sum(R_p)      = {rmap.pixel_scores.sum():+.6f}")
    print(f"  residual      = {rmap.conservation_residual:.2e}")
    print(f"  pos/neg mass  = {rmap.positive_mass:+.4f} / {rmap.negative_mass:+.4f}")
    path = out / f"heatmap_{config.rule}.ppm"
    save_image_ppm(render_heatmap(rmap.pixel_scores), path)
    print(f"  saved: {path}")

print("\n== sensitivity baseline ==")
scores = sensitivity_map(model, sample.image, sample.label)
print(f"  sum of squared gradients = {scores.sum():.6f} (explains variation, not value)")
save_image_ppm(render_heatmap(scores), out / "heatmap_sensitivity.ppm")
print(f"  saved: {out / 'heatmap_sensitivity.ppm'}")
