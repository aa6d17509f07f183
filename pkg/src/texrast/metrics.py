"""Image fidelity metrics: MSE, PSNR, SSIM (standard formulations)."""

from __future__ import annotations

import numpy as np
from scipy.signal import convolve2d

from .errors import DataError

REC601 = np.array([0.299, 0.587, 0.114])


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DataError(f"image shape mismatch {a.shape} vs {b.shape}", field="images")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    d = a.astype(np.float64) - b.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """-10 log10(MSE) for [0, 1] images; identical images report +inf."""
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(m))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def to_grayscale(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img.astype(np.float64)
    return img.astype(np.float64) @ REC601


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    *,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
) -> float:
    """Mean local SSIM over an 11x11 Gaussian window on Rec.601 grayscale."""
    _check_pair(a, b)
    x = to_grayscale(a)
    y = to_grayscale(b)
    if min(x.shape) < window:
        raise DataError(f"image smaller than the {window}x{window} SSIM window", field="images")
    w = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2

    def f(img):
        return convolve2d(img, w, mode="valid")

    mu_x = f(x)
    mu_y = f(y)
    xx = f(x * x) - mu_x * mu_x
    yy = f(y * y) - mu_y * mu_y
    xy = f(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))
