"""Diverging heatmap rendering for relevance maps.

Colors are anchored at exactly white for zero relevance and interpolate
linearly to red for positive and blue for negative values after max-abs
normalization, so the mapping is odd-symmetric: negating the map swaps the
red and blue channels. Rounding is half away from zero, which pins the PPM
bytes exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def _as_plane(relevance: np.ndarray) -> np.ndarray:
    relevance = np.asarray(relevance, dtype=np.float64)
    if relevance.ndim == 1:
        return relevance.reshape(1, -1)
    if relevance.ndim == 2:
        return relevance
    if relevance.ndim == 3:
        return relevance.sum(axis=0)
    raise ShapeMismatch(f"cannot render shape {relevance.shape} as a heatmap")


def render_heatmap(relevance: np.ndarray) -> np.ndarray:
    """Map relevance to (h, w, 3) uint8 RGB; channels of 3-D maps are summed."""
    plane = _as_plane(relevance)
    scale = np.abs(plane).max()
    v = plane / scale if scale > 0 else np.zeros_like(plane)
    fade = np.floor(255.0 * (1.0 - np.abs(v)) + 0.5).astype(np.uint8)
    rgb = np.empty(plane.shape + (3,), dtype=np.uint8)
    positive = v >= 0
    rgb[..., 0] = np.where(positive, 255, fade)
    rgb[..., 1] = fade
    rgb[..., 2] = np.where(positive, fade, 255)
    return rgb
