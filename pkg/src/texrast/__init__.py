"""Neural-texture scene fitting, CPU deferred rendering, and real-time baking."""

from .backend import KERNEL_BACKEND
from .scene import (
    Camera,
    Codebook,
    FeatureAtlas,
    RenderLayers,
    SceneConfig,
    SceneState,
    ShaderMLP,
    SkyboxStack,
    SkyLayer,
    TexturedMesh,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "Camera",
    "Codebook",
    "FeatureAtlas",
    "RenderLayers",
    "SceneConfig",
    "SceneState",
    "ShaderMLP",
    "SkyboxStack",
    "SkyLayer",
    "TexturedMesh",
    "__version__",
]
