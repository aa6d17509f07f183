"""Training losses: masked photometric MSE and a perceptual proxy.

The proxy replaces a pretrained-feature perceptual distance with a
no-dependency stand-in: Charbonnier (smooth-L1) penalties on 4 Gaussian
pyramid levels of the image difference plus on its Sobel gradients. Both are
linear transforms of the difference image, so the backward pass is the exact
adjoint of each transform (verified by dot-product tests).
"""

from __future__ import annotations

from typing import Protocol

import numpy as np
from scipy.ndimage import convolve1d
from scipy.signal import convolve2d

from .errors import NumericError, ValidationError

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def photometric_loss(image: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None):
    """Mean squared per-channel difference over valid pixels.

    Returns (loss, grad wrt image). grad = 2 * diff / N with N the number of
    valid pixel-channel entries, so magnitudes are resolution independent.
    """
    if image.shape != target.shape:
        raise ValidationError(f"shape mismatch {image.shape} vs {target.shape}", field="image")
    diff = image - target
    if mask is not None:
        diff = diff * mask[..., None].astype(diff.dtype)
        n_valid = int(np.count_nonzero(mask)) * image.shape[-1]
    else:
        n_valid = diff.size
    if n_valid == 0:
        raise NumericError("photometric loss over zero valid pixels")
    loss = float((diff.astype(np.float64) ** 2).sum() / n_valid)
    return loss, (2.0 / n_valid) * diff


def blur5(x: np.ndarray) -> np.ndarray:
    """Separable binomial blur, zero padding. Symmetric kernel: self-adjoint."""
    y = convolve1d(x, _BINOMIAL5, axis=0, mode="constant", cval=0.0)
    return convolve1d(y, _BINOMIAL5, axis=1, mode="constant", cval=0.0)


def down2(x: np.ndarray) -> np.ndarray:
    return x[::2, ::2]


def down2_adjoint(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape, dtype=g.dtype)
    out[::2, ::2] = g
    return out


def sobel_valid(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel valid-mode correlation with a Sobel kernel, (H-2, W-2, C)."""
    return np.stack(
        [convolve2d(x[..., c], kernel[::-1, ::-1], mode="valid") for c in range(x.shape[-1])],
        axis=-1,
    )


def sobel_valid_adjoint(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint of sobel_valid: full convolution of the cotangent with the kernel."""
    return np.stack(
        [convolve2d(g[..., c], kernel, mode="full") for c in range(g.shape[-1])],
        axis=-1,
    )


def _charbonnier(x: np.ndarray, eps: float):
    r = np.sqrt(x * x + eps * eps)
    value = float((r - eps).sum(dtype=np.float64))
    return value, x / r


class PerceptualLoss(Protocol):
    """Pluggable perceptual distance: returns (loss, grad wrt image)."""

    def __call__(
        self, image: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None
    ) -> tuple[float, np.ndarray]: ...


class PyramidGradientLoss:
    """Default perceptual proxy: pyramid + Sobel Charbonnier penalties.

    Charbonnier (sqrt(x^2 + eps^2) - eps) stands in for L1 so the loss stays
    differentiable everywhere and finite-difference checks hold at every
    parameter.
    """

    def __init__(self, levels: int = 4, eps: float = 1e-3):
        self.levels = levels
        self.eps = eps

    def __call__(self, image, target, mask=None):
        if image.shape != target.shape:
            raise ValidationError(f"shape mismatch {image.shape} vs {target.shape}", field="image")
        diff = image - target
        if mask is not None:
            diff = diff * mask[..., None].astype(diff.dtype)

        loss = 0.0
        # Pyramid terms: Charbonnier mean of each level of the difference.
        levels = [diff]
        for _ in range(self.levels - 1):
            levels.append(down2(blur5(levels[-1])))
        level_grads = []
        for lv in levels:
            val, g = _charbonnier(lv, self.eps)
            loss += val / lv.size
            level_grads.append(g / lv.size)
        # Sobel terms on the full-resolution difference (interior pixels).
        sobel_ctx = []
        if diff.shape[0] >= 3 and diff.shape[1] >= 3:
            for kern in (_SOBEL_X, _SOBEL_Y):
                s = sobel_valid(diff, kern)
                val, g = _charbonnier(s, self.eps)
                loss += val / s.size
                sobel_ctx.append((kern, g / s.size))

        grad = level_grads[0]
        upstream = None
        for k in range(len(levels) - 1, 0, -1):
            g_level = level_grads[k] if upstream is None else level_grads[k] + upstream
            upstream = blur5(down2_adjoint(g_level, levels[k - 1].shape))
        if upstream is not None:
            grad = grad + upstream
        for kern, g in sobel_ctx:
            grad = grad + sobel_valid_adjoint(g, kern)
        if mask is not None:
            grad = grad * mask[..., None].astype(grad.dtype)
        return float(loss), grad.astype(image.dtype)
