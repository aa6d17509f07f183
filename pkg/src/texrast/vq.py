"""Vector quantization of feature atlases and the VQ training terms.

Assignment maps each texel feature to its nearest codebook row (squared L2,
ties to the lowest index). The loss splits into an alignment term (gradient
to the codebook only) and a beta-weighted commitment term (gradient to the
raw features only); rendering gradients reach the raw atlas through the
straight-through estimator in the trainer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import Codebook, FeatureAtlas

log = logging.getLogger(__name__)

_CHUNK_ELEMS = 4_000_000  # bound on chunk * K * D float64 scratch


def nearest_codes(features: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Index of the nearest code per feature row; exact float64 distances."""
    if features.shape[-1] != codes.shape[1]:
        raise ValidationError(
            f"feature dim {features.shape[-1]} != code dim {codes.shape[1]}", field="codebook"
        )
    flat = features.reshape(-1, codes.shape[1]).astype(np.float64)
    c = codes.astype(np.float64)
    out = np.empty(flat.shape[0], dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, c.shape[0] * c.shape[1]))
    for lo in range(0, flat.shape[0], step):
        chunk = flat[lo : lo + step]
        d2 = ((chunk[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + step] = np.argmin(d2, axis=1)
    return out.reshape(features.shape[:-1])


@dataclass
class QuantizationResult:
    indices: np.ndarray  # nearest-code id per texel (uint16, input spatial shape)
    quantized: np.ndarray  # codes gathered by index (same shape as input features)
    histogram: np.ndarray  # (K,) int64 assignment counts


def quantize(atlas: FeatureAtlas | np.ndarray, book: Codebook) -> QuantizationResult:
    """Assign every texel to its closest latent code (ties to lowest index)."""
    data = atlas.data if isinstance(atlas, FeatureAtlas) else np.asarray(atlas)
    idx = nearest_codes(data, book.codes)
    hist = np.bincount(idx.reshape(-1), minlength=book.size).astype(np.int64)
    return QuantizationResult(
        indices=idx.astype(np.uint16),
        quantized=book.codes[idx],
        histogram=hist,
    )


def vq_loss(
    features: np.ndarray,
    codes: np.ndarray,
    indices: np.ndarray,
    beta: float = 0.25,
):
    """Alignment + commitment loss over assigned texels, mean-per-texel.

    loss = mean_n ||sg[f_n] - e_{a(n)}||^2 + beta * mean_n ||sg[e_{a(n)}] - f_n||^2
    Returns (loss, g_features, g_codes); the stop-gradients make the codebook
    gradient come only from the first term and the feature gradient only from
    the second.
    """
    if beta < 0:
        raise ValidationError("commitment weight beta must be >= 0", field="vq.beta")
    n = features.shape[0]
    g_codes = np.zeros_like(codes)
    if n == 0:
        return 0.0, np.zeros_like(features), g_codes
    flat_idx = indices.reshape(-1).astype(np.int64)
    diff = features - codes[flat_idx]
    loss = (1.0 + beta) * float((diff.astype(np.float64) ** 2).sum() / n)
    g_features = (2.0 * beta / n) * diff
    np.add.at(g_codes, flat_idx, (-2.0 / n) * diff)
    return loss, g_features, g_codes


def reseed_dead_codes(
    book: Codebook,
    candidates: np.ndarray,
    *,
    rng: np.random.Generator,
) -> np.ndarray:
    """Replace codes with zero usage in the current window by random candidate rows.

    Mutates the codebook in place, resets all usage counters (window restart),
    and returns the reseeded code indices.
    """
    dead = np.nonzero(book.usage == 0)[0]
    if len(dead) and len(candidates):
        picks = rng.integers(0, len(candidates), size=len(dead))
        book.codes[dead] = candidates[picks].astype(np.float32)
        log.info("reseeded %d dead codes: %s", len(dead), dead.tolist())
    book.usage[:] = 0
    return dead
