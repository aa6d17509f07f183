"""Loss tests: photometric hand cases, adjoint identities, proxy behavior."""

import numpy as np
import pytest

from texrast import losses
from texrast.errors import NumericError


def test_photometric_identical_images():
    img = np.random.default_rng(0).uniform(size=(8, 8, 3)).astype(np.float32)
    loss, grad = losses.photometric_loss(img, img)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_photometric_uniform_offset():
    rng = np.random.default_rng(1)
    target = rng.uniform(0.1, 0.8, size=(10, 10, 3))
    img = target + 0.1
    loss, grad = losses.photometric_loss(img, target)
    assert loss == pytest.approx(0.01, rel=1e-6)
    assert np.allclose(grad, 2 * 0.1 / img.size)


def test_photometric_mask_equals_submimage_loss():
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(6, 8, 3))
    target = rng.uniform(size=(6, 8, 3))
    mask = np.zeros((6, 8), dtype=bool)
    mask[:, :4] = True
    loss_masked, grad = losses.photometric_loss(img, target, mask)
    loss_sub, _ = losses.photometric_loss(img[:, :4], target[:, :4])
    assert loss_masked == pytest.approx(loss_sub, rel=1e-12)
    assert np.all(grad[:, 4:] == 0.0)


def test_photometric_zero_valid_pixels():
    img = np.zeros((4, 4, 3))
    with pytest.raises(NumericError):
        losses.photometric_loss(img, img, np.zeros((4, 4), dtype=bool))


def test_photometric_gradient_finite_difference():
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(5, 5, 3))
    target = rng.uniform(size=(5, 5, 3))
    loss, grad = losses.photometric_loss(img, target)
    h = 1e-6
    for _ in range(20):
        i, j, c = rng.integers(0, 5), rng.integers(0, 5), rng.integers(0, 3)
        img[i, j, c] += h
        f1, _ = losses.photometric_loss(img, target)
        img[i, j, c] -= 2 * h
        f2, _ = losses.photometric_loss(img, target)
        img[i, j, c] += h
        assert (f1 - f2) / (2 * h) == pytest.approx(grad[i, j, c], rel=1e-4, abs=1e-10)


# -- adjoint identities for the proxy's linear ops ------------------------------------

def _dot(a, b):
    return float((a * b).sum())


def test_blur5_self_adjoint():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(9, 7, 3))
    y = rng.normal(size=(9, 7, 3))
    assert _dot(losses.blur5(x), y) == pytest.approx(_dot(x, losses.blur5(y)), rel=1e-12)


def test_down2_adjoint_identity():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(9, 7, 3))
    y = rng.normal(size=(5, 4, 3))
    assert _dot(losses.down2(x), y) == pytest.approx(
        _dot(x, losses.down2_adjoint(y, x.shape)), rel=1e-12
    )


def test_sobel_adjoint_identity():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(8, 6, 3))
    for kern in (losses._SOBEL_X, losses._SOBEL_Y):
        y = rng.normal(size=(6, 4, 3))
        assert _dot(losses.sobel_valid(x, kern), y) == pytest.approx(
            _dot(x, losses.sobel_valid_adjoint(y, kern)), rel=1e-12
        )


# -- perceptual proxy ------------------------------------------------------------------

def checkerboard(n=32, cell=4):
    iy, ix = np.indices((n, n))
    board = (((iy // cell) + (ix // cell)) % 2).astype(np.float64)
    return np.repeat(board[..., None], 3, axis=2)


def test_proxy_identical_images_zero():
    img = np.random.default_rng(7).uniform(size=(16, 16, 3))
    loss, grad = losses.PyramidGradientLoss()(img, img)
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_proxy_edge_aware_versus_photometric():
    """A 1-pixel shift must cost the proxy more than an equal-MSE flat offset."""
    board = checkerboard()
    shifted = np.roll(board, 1, axis=1)
    proxy = losses.PyramidGradientLoss()
    mse_shift, _ = losses.photometric_loss(board, shifted)
    offset = board + np.sqrt(mse_shift)  # same MSE as the shift
    mse_off, _ = losses.photometric_loss(board, offset)
    assert mse_off == pytest.approx(mse_shift, rel=1e-9)
    p_shift, _ = proxy(board, shifted)
    p_off, _ = proxy(board, offset)
    assert p_shift > p_off  # photometric cannot tell them apart; the proxy can


def test_proxy_constant_offset_has_zero_gradient_term():
    rng = np.random.default_rng(8)
    img = rng.uniform(0.2, 0.8, size=(16, 16, 3))
    target = img + 0.1
    # Sobel of a constant offset is zero on the interior, so the gradient term
    # vanishes and only the pyramid terms contribute.
    diff = (img - target).astype(np.float64)
    sx = losses.sobel_valid(diff, losses._SOBEL_X)
    sy = losses.sobel_valid(diff, losses._SOBEL_Y)
    assert np.abs(sx).max() < 1e-12 and np.abs(sy).max() < 1e-12
    loss, _ = losses.PyramidGradientLoss()(img, target)
    assert loss > 0.0  # pyramid terms remain positive


def test_proxy_gradient_finite_difference():
    rng = np.random.default_rng(9)
    img = rng.uniform(size=(12, 12, 3))
    target = rng.uniform(size=(12, 12, 3))
    proxy = losses.PyramidGradientLoss()
    loss, grad = proxy(img, target)
    h = 1e-6
    for _ in range(25):
        i, j, c = rng.integers(0, 12), rng.integers(0, 12), rng.integers(0, 3)
        img[i, j, c] += h
        f1, _ = proxy(img, target)
        img[i, j, c] -= 2 * h
        f2, _ = proxy(img, target)
        img[i, j, c] += h
        fd = (f1 - f2) / (2 * h)
        assert fd == pytest.approx(grad[i, j, c], rel=1e-4, abs=1e-9)


def test_proxy_respects_mask():
    rng = np.random.default_rng(10)
    img = rng.uniform(size=(16, 16, 3))
    target = rng.uniform(size=(16, 16, 3))
    mask = np.zeros((16, 16), dtype=bool)
    mask[4:12, 4:12] = True
    loss, grad = losses.PyramidGradientLoss()(img, target, mask)
    assert loss > 0
    assert np.all(grad[~mask] == 0.0)
