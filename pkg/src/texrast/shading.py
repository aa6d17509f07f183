"""Learned fragment shading and layer compositing, with analytic backward passes.

The compute graph is fixed (bilinear features -> tiny MLP -> composite), so
gradients are hand-derived rather than routed through an autodiff engine.
The low-level functions operate on plain (weight, bias, activation) tuples so
the trainer and the 64-bit gradient-check harness can feed arrays of either
precision; thin wrappers accept ShaderMLP objects.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import NumericError, ValidationError
from .scene import RenderLayers, ShaderMLP


def layer_tuples(layers, dtype=None):
    """(weight, bias, activation) views of Dense layers, optionally cast."""
    if dtype is None:
        return [(d.weight, d.bias, d.activation) for d in layers]
    return [
        (d.weight.astype(dtype, copy=False), d.bias.astype(dtype, copy=False), d.activation)
        for d in layers
    ]


def encode_dirs(d: np.ndarray, mode: str = "raw") -> np.ndarray:
    """Optional 2-band frequency encoding of view directions."""
    if mode == "raw":
        return d
    if mode == "freq2":
        parts = [d]
        for k in (1.0, 2.0):
            parts.append(np.sin(np.pi * k * d))
            parts.append(np.cos(np.pi * k * d))
        return np.concatenate(parts, axis=-1).astype(d.dtype)
    raise ValidationError(f"unknown view encoding {mode!r}", field="config.view_encoding")


def view_width(mode: str) -> int:
    return 3 if mode == "raw" else 15


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "sigmoid":
        return expit(x)
    if name == "linear":
        return x
    raise ValidationError(f"unknown activation {name!r}")


def _act_grad(name: str, y: np.ndarray) -> np.ndarray:
    # Derivatives expressed via the post-activation value.
    if name == "relu":
        return (y > 0.0).astype(y.dtype)
    if name == "sigmoid":
        return y * (1.0 - y)
    return np.ones_like(y)


def dense_forward(layers, x: np.ndarray):
    """Run (W, b, activation) layers; the tape holds all activations."""
    tape = [x]
    for w, b, act in layers:
        x = _act(act, x @ w + b)
        tape.append(x)
    return x, tape


def dense_backward(layers, tape, g_out: np.ndarray):
    """Backprop through dense_forward. Returns (g_input, [(dW, db), ...])."""
    grads = [None] * len(layers)
    g = g_out
    for k in range(len(layers) - 1, -1, -1):
        w, _, act = layers[k]
        g_pre = g * _act_grad(act, tape[k + 1])
        grads[k] = (tape[k].T @ g_pre, g_pre.sum(axis=0))
        g = g_pre @ w.T
    return g, grads


# -- foreground head: color = squash(MLP(concat(F, d))) ------------------------

def fg_forward(layers, features: np.ndarray, dirs_enc: np.ndarray):
    x = np.concatenate([features, dirs_enc], axis=1)
    color, tape = dense_forward(layers, x)
    return color, tape


def fg_backward(layers, tape, feature_dim: int, g_color: np.ndarray):
    g_in, grads = dense_backward(layers, tape, g_color)
    return g_in[:, :feature_dim], g_in[:, feature_dim:], grads


# -- background head: trunk(F) -> opacity; concat(trunk, d) -> color -----------

def bg_forward(trunk, opacity_layer, color_layers, features: np.ndarray, dirs_enc: np.ndarray):
    hidden, trunk_tape = dense_forward(trunk, features)
    opacity, op_tape = dense_forward([opacity_layer], hidden)
    color_in = np.concatenate([hidden, dirs_enc], axis=1)
    color, color_tape = dense_forward(color_layers, color_in)
    return opacity[:, 0], color, (trunk_tape, op_tape, color_tape, hidden.shape[1])


def bg_backward(trunk, opacity_layer, color_layers, ctx, g_opacity, g_color):
    trunk_tape, op_tape, color_tape, hid = ctx
    g_color_in, color_grads = dense_backward(color_layers, color_tape, g_color)
    g_hid_op, op_grads = dense_backward([opacity_layer], op_tape, g_opacity[:, None])
    g_hidden = g_color_in[:, :hid] + g_hid_op
    g_dirs = g_color_in[:, hid:]
    g_features, trunk_grads = dense_backward(trunk, trunk_tape, g_hidden)
    return g_features, g_dirs, (trunk_grads, op_grads[0], color_grads)


# -- no-MLP ablation: the texture stores color (and opacity) directly ----------

def flat_fg_forward(features: np.ndarray):
    color = expit(features[:, :3])
    return color


def flat_fg_backward(color, g_color, feature_dim: int):
    g_feat = np.zeros((color.shape[0], feature_dim), dtype=color.dtype)
    g_feat[:, :3] = g_color * color * (1.0 - color)
    return g_feat


def flat_bg_forward(features: np.ndarray):
    if features.shape[1] < 4:
        raise ValidationError("flat background shading needs D >= 4", field="config.feature_dim")
    color = expit(features[:, :3])
    opacity = expit(features[:, 3])
    return opacity, color


def flat_bg_backward(opacity, color, g_opacity, g_color, feature_dim: int):
    g_feat = np.zeros((color.shape[0], feature_dim), dtype=color.dtype)
    g_feat[:, :3] = g_color * color * (1.0 - color)
    g_feat[:, 3] = g_opacity * opacity * (1.0 - opacity)
    return g_feat


# -- public ShaderMLP wrappers --------------------------------------------------

def shade_foreground(mlp: ShaderMLP, features: np.ndarray, dirs: np.ndarray, *, view_encoding="raw"):
    """Foreground shading op; returns (color, backward context)."""
    layers = layer_tuples(mlp.layers, features.dtype)
    d_enc = encode_dirs(dirs, view_encoding)
    if features.shape[1] + d_enc.shape[1] != layers[0][0].shape[0]:
        raise ValidationError(
            f"feature width {features.shape[1]} does not match shader input", field="mlp_fg"
        )
    color, tape = fg_forward(layers, features, d_enc)
    return color, (layers, tape, features.shape[1])


def shade_foreground_backward(ctx, g_color: np.ndarray):
    layers, tape, dim = ctx
    return fg_backward(layers, tape, dim, g_color)


def shade_background(mlp: ShaderMLP, features: np.ndarray, dirs: np.ndarray, *, view_encoding="raw"):
    """Background shading op; returns (opacity, color, backward context)."""
    dtype = features.dtype
    trunk = layer_tuples(mlp.trunk, dtype)
    op = layer_tuples([mlp.opacity_head], dtype)[0]
    color_layers = layer_tuples(mlp.color_layers, dtype)
    expect = trunk[0][0].shape[0] if trunk else op[0].shape[0]
    if features.shape[1] != expect:
        raise ValidationError(
            f"feature width {features.shape[1]} does not match shader input", field="mlp_bg"
        )
    d_enc = encode_dirs(dirs, view_encoding)
    opacity, color, ctx = bg_forward(trunk, op, color_layers, features, d_enc)
    return opacity, color, (trunk, op, color_layers, ctx)


def shade_background_backward(wrapped_ctx, g_opacity: np.ndarray, g_color: np.ndarray):
    trunk, op, color_layers, ctx = wrapped_ctx
    return bg_backward(trunk, op, color_layers, ctx, g_opacity, g_color)


# -- compositing (near-to-far transmittance form) ------------------------------

def composite_images(colors: list[np.ndarray], opacities: list[np.ndarray]) -> np.ndarray:
    """I = sum_i I_i * O_i * prod_{j<i}(1 - O_j), running transmittance."""
    transmittance = np.ones_like(opacities[0])
    image = np.zeros_like(colors[0])
    for color, alpha in zip(colors, opacities):
        weight = alpha * transmittance
        image = image + color * weight[..., None]
        transmittance = transmittance * (1.0 - alpha)
    return image


def compositing_weights(opacities: list[np.ndarray]) -> list[np.ndarray]:
    """Per-layer contribution weights w_i = O_i * prod_{j<i}(1 - O_j)."""
    transmittance = np.ones_like(opacities[0])
    weights = []
    for alpha in opacities:
        weights.append(alpha * transmittance)
        transmittance = transmittance * (1.0 - alpha)
    return weights


def composite_backward(g_image: np.ndarray, colors, opacities):
    """Gradients of the composite w.r.t. every layer color and opacity.

    Uses the suffix recurrence C_i = O_i I_i + (1 - O_i) C_{i+1} (algebraically
    identical to the near-to-far form) so no division by (1 - O) is needed.
    """
    n = len(colors)
    suffix = [None] * (n + 1)
    suffix[n] = np.zeros_like(colors[0])
    for i in range(n - 1, -1, -1):
        o = opacities[i][..., None]
        suffix[i] = o * colors[i] + (1.0 - o) * suffix[i + 1]
    g_colors, g_opacities = [], []
    transmittance = np.ones_like(opacities[0])
    for i in range(n):
        o = opacities[i]
        g_colors.append(g_image * (transmittance * o)[..., None])
        g_opacities.append((g_image * (colors[i] - suffix[i + 1])).sum(axis=-1) * transmittance)
        transmittance = transmittance * (1.0 - o)
    return g_colors, g_opacities


def composite(layers: RenderLayers) -> np.ndarray:
    """Composite validated render layers into the final image."""
    layers.validate(foreground_binary=False)
    for i, o in enumerate(layers.opacities):
        if not np.isfinite(o).all():
            raise NumericError(f"non-finite opacity in layer {i}")
    return composite_images(layers.colors, layers.opacities)
