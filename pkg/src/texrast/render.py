"""Reference full-frame renderer: raster -> shade -> composite for one camera."""

from __future__ import annotations

import numpy as np

from . import shading
from .errors import ValidationError
from .raster import DEFAULT_ZNEAR, FeatureBuffer, rasterize_mesh, rasterize_skybox
from .scene import Camera, RenderLayers, SceneState


def render_view(
    state: SceneState,
    cam: Camera,
    *,
    znear: float = DEFAULT_ZNEAR,
    dtype=np.float32,
    return_buffers: bool = False,
) -> dict:
    """Render the scene through the live (training-time) path.

    Quantized atlases render their dequantized payloads. Returns a dict with
    "image" (H, W, 3) and "layers" (RenderLayers); adds "buffers" when asked.
    """
    enc = state.config.view_encoding
    npx = cam.height * cam.width
    fb0 = rasterize_mesh(state.mesh, state.atlas, cam, znear=znear, dtype=dtype)
    color0 = np.zeros((npx, 3), dtype=dtype)
    covered = np.nonzero(fb0.mask.reshape(-1))[0]
    if len(covered):
        feats = fb0.features.reshape(npx, -1)[covered]
        dirs = fb0.view_dirs.reshape(npx, 3)[covered]
        if state.config.shade_mode == "mlp":
            color, _ = shading.shade_foreground(state.mlp_fg, feats, dirs, view_encoding=enc)
        else:
            color = shading.flat_fg_forward(feats)
        color0[covered] = color
    colors = [color0.reshape(cam.height, cam.width, 3)]
    opacities = [fb0.mask.astype(dtype)]

    buffers: list[FeatureBuffer] = [fb0]
    dirs64 = cam.pixel_directions()
    n_sky = len(state.sky)
    for li in range(n_sky):
        fb = rasterize_skybox(state.sky, li, cam, dtype=dtype, dirs=dirs64)
        buffers.append(fb)
        feats = fb.features.reshape(npx, -1)
        dirs = fb.view_dirs.reshape(npx, 3)
        if state.config.shade_mode == "mlp":
            if state.mlp_bg is None:
                raise ValidationError("scene has sky layers but no background shader", field="mlp_bg")
            opacity, color, _ = shading.shade_background(state.mlp_bg, feats, dirs, view_encoding=enc)
        else:
            opacity, color = shading.flat_bg_forward(feats)
        if li == n_sky - 1:
            opacity = np.ones(npx, dtype=dtype)
        colors.append(color.reshape(cam.height, cam.width, 3))
        opacities.append(opacity.reshape(cam.height, cam.width))

    layers = RenderLayers(colors=colors, opacities=opacities)
    image = shading.composite_images(colors, opacities)
    out = {"image": image, "layers": layers}
    if return_buffers:
        out["buffers"] = buffers
    return out
