"""Deterministic synthetic data and toy model training.

The synthetic task plants a bright square patch at a recorded location:
label 1 images contain the patch on a noisy background, label 0 images are
noise only. Because the evidence location is known exactly, perturbation
curves and context ratios can be sanity-checked against ground truth.

Training is single-threaded, seeded, plain SGD on the softmax cross-entropy
of two logits; the explanation target is always the true-class logit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DivergedTraining, NonFiniteValue, ParseError, ShapeMismatch, SpecError
from .evaluation import BoundingBox
from .io import load_image_pgm, save_image_pgm
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU
from .network import Model, backpropagate, forward, forward_traced

CLASS_LABELS = ["patch-absent", "patch-present"]


@dataclass(frozen=True)
class SyntheticSpec:
    image_size: int = 8
    patch_size: int = 3
    noise_level: float = 0.1
    seed: int = 0
    sample_count: int = 200

    def __post_init__(self):
        if self.image_size < 1 or self.patch_size < 1:
            raise SpecError(f"sizes must be positive, got image={self.image_size} patch={self.patch_size}")
        if self.patch_size > self.image_size:
            raise SpecError(
                f"patch {self.patch_size}x{self.patch_size} does not fit in an "
                f"{self.image_size}x{self.image_size} image"
            )
        if self.noise_level < 0:
            raise SpecError(f"noise level must be >= 0, got {self.noise_level}")
        if self.sample_count < 1:
            raise SpecError(f"sample count must be >= 1, got {self.sample_count}")


@dataclass(frozen=True, eq=False)
class Sample:
    image: np.ndarray
    label: int
    bbox: BoundingBox | None
    name: str


def generate_dataset(spec: SyntheticSpec) -> list:
    """Seeded synthetic samples; labels alternate so every prefix is balanced."""
    rng = np.random.default_rng(spec.seed)
    s, p = spec.image_size, spec.patch_size
    samples = []
    for i in range(spec.sample_count):
        label = 1 if i % 2 == 0 else 0
        image = np.clip(rng.normal(0.0, spec.noise_level, size=(s, s)), 0.0, 1.0) \
            if spec.noise_level > 0 else np.zeros((s, s))
        bbox = None
        if label == 1:
            row, col = (int(v) for v in rng.integers(0, s - p + 1, size=2))
            image[row:row + p, col:col + p] = 1.0
            bbox = BoundingBox(x=col, y=row, width=p, height=p)
        samples.append(Sample(image=image, label=label, bbox=bbox, name=f"sample_{i:04d}"))
    return samples


def save_dataset(samples, directory) -> Path:
    """Write PGM images plus a manifest.csv of (filename, label, bbox)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label", "x", "y", "w", "h"])
        for sample in samples:
            filename = sample.name + ".pgm"
            save_image_pgm(sample.image, directory / filename)
            if sample.bbox is None:
                writer.writerow([filename, sample.label, "", "", "", ""])
            else:
                b = sample.bbox
                writer.writerow([filename, sample.label, b.x, b.y, b.width, b.height])
    return manifest


def load_dataset(directory) -> list:
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.is_file():
        raise ParseError(f"no manifest.csv in {directory}")
    samples = []
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                bbox = None
                if row["x"] != "":
                    bbox = BoundingBox(x=int(row["x"]), y=int(row["y"]),
                                       width=int(row["w"]), height=int(row["h"]))
                samples.append(Sample(
                    image=load_image_pgm(directory / row["filename"]),
                    label=int(row["label"]),
                    bbox=bbox,
                    name=Path(row["filename"]).stem,
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{manifest}: malformed row {row!r}: {exc}") from exc
    return samples


@dataclass(frozen=True)
class TrainConfig:
    architecture: str = "mlp"
    hidden_sizes: tuple = (16,)
    channels: tuple = (4,)
    learning_rate: float = 0.1
    epochs: int = 60
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ("mlp", "convnet"):
            raise SpecError(f"unknown architecture '{self.architecture}'")
        if self.learning_rate <= 0 or self.epochs < 0:
            raise SpecError("need learning_rate > 0 and epochs >= 0")


def _uniform_init(rng, shape, fan_in):
    r = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-r, r, size=shape)


def build_model(image_size: int, config: TrainConfig, rng) -> Model:
    if config.architecture == "mlp":
        layers = [Flatten()]
        width = image_size * image_size
        for hidden in config.hidden_sizes:
            layers += [Dense(_uniform_init(rng, (width, hidden), width), np.zeros(hidden)), ReLU()]
            width = hidden
        layers.append(Dense(_uniform_init(rng, (width, 2), width), np.zeros(2)))
        input_shape = (image_size, image_size)
        name = "mlp-" + "x".join(str(h) for h in config.hidden_sizes)
    else:
        layers = []
        in_ch, side = 1, image_size
        for ch in config.channels:
            fan_in = in_ch * 9
            layers += [
                Conv2D(_uniform_init(rng, (ch, in_ch, 3, 3), fan_in), np.zeros(ch), stride=1),
                ReLU(),
                MaxPool2D(window=(2, 2), stride=2),
            ]
            side = (side - 2) // 2
            in_ch = ch
        width = in_ch * side * side
        layers += [Flatten(), Dense(_uniform_init(rng, (width, 2), width), np.zeros(2))]
        input_shape = (1, image_size, image_size)
        name = "convnet-" + "x".join(str(c) for c in config.channels)
    metadata = {"name": name, "seed": config.seed, "labels": list(CLASS_LABELS)}
    return Model(input_shape=input_shape, layers=layers, metadata=metadata)


def model_input(model: Model, image: np.ndarray) -> np.ndarray:
    """Reshape an image to the model's input shape (sizes must match)."""
    image = np.asarray(image, dtype=np.float64)
    if image.size != int(np.prod(model.input_shape)):
        raise ShapeMismatch(
            f"image with {image.size} values cannot feed input shape {model.input_shape}"
        )
    return image.reshape(model.input_shape)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def accuracy(model: Model, samples) -> float:
    correct = sum(
        int(np.argmax(forward(model, model_input(model, s.image))) == s.label)
        for s in samples
    )
    return correct / len(samples)


def train_toy(dataset, config: TrainConfig) -> Model:
    """Plain seeded SGD; returns the model with its train accuracy in metadata.

    Raises DivergedTraining as soon as the loss or any parameter stops being
    finite. With epochs=0 the freshly initialized model is returned.
    """
    if not dataset:
        raise SpecError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    image_size = dataset[0].image.shape[0]
    model = build_model(image_size, config, rng)
    # the model stays private to this loop; parameters are updated in place
    params = [layer for layer in model.layers if isinstance(layer, (Dense, Conv2D))]

    inputs = [model_input(model, s.image) for s in dataset]
    labels = [s.label for s in dataset]
    try:
        for _ in range(config.epochs):
            for idx in rng.permutation(len(inputs)):
                x, label = inputs[idx], labels[idx]
                logits, trace = forward_traced(model, x)
                probs = _softmax(logits)
                loss = -np.log(probs[label]) if probs[label] > 0 else np.inf
                if not np.isfinite(loss):
                    raise DivergedTraining(f"loss became {loss}")
                grad_logits = probs.copy()
                grad_logits[label] -= 1.0
                _, grads = backpropagate(model, trace, grad_logits)
                for layer, layer_grads in zip(model.layers, grads):
                    for field_name, grad in layer_grads.items():
                        arr = getattr(layer, field_name)
                        arr -= config.learning_rate * grad
            for layer in params:
                for arr in (getattr(layer, "weights", None), getattr(layer, "kernel", None),
                            layer.bias):
                    if arr is not None and not np.all(np.isfinite(arr)):
                        raise DivergedTraining("parameters became non-finite")
    except NonFiniteValue as exc:
        raise DivergedTraining(f"forward pass diverged: {exc}") from exc

    model.metadata["train_accuracy"] = accuracy(model, dataset)
    return model
