"""File formats: model JSON, tensor CSV, and binary PGM/PPM images.

The model file is human-readable JSON. Floats are serialized with ``repr``
precision, so a save/load round trip reproduces every weight bit-exactly.
Images use the 8-bit binary netpbm formats (P5 grayscale, P6 color) to stay
codec-free; grayscale pixels map linearly between bytes and [0, 1].
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import NonFiniteValue, ParseError, ShapeMismatch, UnknownLayerType
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, SumPool2D
from .network import Model


def _layer_to_dict(layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
    if isinstance(layer, Conv2D):
        return {
            "type": "conv2d",
            "kernel": layer.kernel.tolist(),
            "bias": layer.bias.tolist(),
            "stride": layer.stride,
        }
    if isinstance(layer, MaxPool2D):
        return {"type": "maxpool2d", "window": list(layer.window), "stride": layer.stride}
    if isinstance(layer, SumPool2D):
        return {"type": "sumpool2d", "window": list(layer.window), "stride": layer.stride}
    if isinstance(layer, ReLU):
        return {"type": "relu"}
    if isinstance(layer, Flatten):
        return {"type": "flatten"}
    raise UnknownLayerType(f"cannot serialize layer of type {type(layer).__name__}")


def _layer_from_dict(spec: dict):
    if not isinstance(spec, dict) or "type" not in spec:
        raise ParseError(f"layer entry must be an object with a 'type' key, got {spec!r}")
    kind = spec["type"]
    try:
        if kind == "dense":
            return Dense(weights=spec["weights"], bias=spec["bias"])
        if kind == "conv2d":
            return Conv2D(kernel=spec["kernel"], bias=spec["bias"], stride=int(spec.get("stride", 1)))
        if kind == "maxpool2d":
            return MaxPool2D(window=spec["window"], stride=int(spec["stride"]))
        if kind == "sumpool2d":
            return SumPool2D(window=spec["window"], stride=int(spec["stride"]))
        if kind == "relu":
            return ReLU()
        if kind == "flatten":
            return Flatten()
    except KeyError as exc:
        raise ParseError(f"layer '{kind}' is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"layer '{kind}' has a malformed field: {exc}") from exc
    raise UnknownLayerType(f"unknown layer type '{kind}'")


def save_model(model: Model, path) -> None:
    doc = {
        "input_shape": list(model.input_shape),
        "layers": [_layer_to_dict(layer) for layer in model.layers],
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _reject_non_finite(token: str):
    raise ParseError(f"non-finite constant {token!r} not allowed in model files")


def load_model(path) -> Model:
    try:
        doc = json.loads(Path(path).read_text(), parse_constant=_reject_non_finite)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    try:
        input_shape = doc["input_shape"]
        layer_specs = doc["layers"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing required key {exc}") from exc
    layers = [_layer_from_dict(spec) for spec in layer_specs]
    model = Model(
        input_shape=input_shape,
        layers=layers,
        metadata=doc.get("metadata", {}),
    )
    for layer in model.layers:
        for arr in (getattr(layer, "weights", None), getattr(layer, "bias", None),
                    getattr(layer, "kernel", None)):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise NonFiniteValue(f"{path}: layer parameters contain NaN/Inf")
    return model


def save_tensor_csv(values: np.ndarray, path) -> None:
    """One CSV row, row-major, repr-precision floats."""
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    Path(path).write_text(",".join(repr(v) for v in flat.tolist()) + "\n")


def load_tensor_csv(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    if not text:
        raise ParseError(f"{path}: empty tensor file")
    cells = [c for line in text.splitlines() for c in line.split(",") if c.strip() != ""]
    try:
        values = np.array([float(c) for c in cells], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: malformed number: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: tensor contains NaN/Inf")
    return values


def _quantize(values: np.ndarray) -> np.ndarray:
    # round half away from zero; inputs are in [0, 255] so this is floor(x + .5)
    return np.floor(values + 0.5).astype(np.uint8)


def save_image_pgm(image: np.ndarray, path) -> None:
    """Write a 2-D array with values in [0, 1] as an 8-bit binary PGM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeMismatch(f"PGM image must be 2-D, got shape {image.shape}")
    h, w = image.shape
    data = _quantize(np.clip(image, 0.0, 1.0) * 255.0)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _read_pnm_header(blob: bytes, magic: bytes, path):
    if not blob.startswith(magic):
        raise ParseError(f"{path}: not a {magic.decode()} file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ParseError(f"{path}: malformed header: {exc}") from exc
    if maxval != 255:
        raise ParseError(f"{path}: only 8-bit images supported, maxval={maxval}")
    return w, h, pos


def load_image_pgm(path) -> np.ndarray:
    """Read an 8-bit binary PGM and rescale to [0, 1]."""
    blob = Path(path).read_bytes()
    w, h, pos = _read_pnm_header(blob, b"P5", path)
    raw = blob[pos:pos + w * h]
    if len(raw) != w * h:
        raise ParseError(f"{path}: expected {w * h} pixel bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.float64) / 255.0


def save_image_ppm(rgb: np.ndarray, path) -> None:
    """Write an (h, w, 3) uint8 array as a binary PPM."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ShapeMismatch(f"PPM data must be (h, w, 3) uint8, got {rgb.shape} {rgb.dtype}")
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def load_image_ppm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    w, h, pos = _read_pnm_header(blob, b"P6", path)
    raw = blob[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise ParseError(f"{path}: expected {w * h * 3} pixel bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
