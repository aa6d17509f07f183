"""Core domain types: mesh, feature atlases, skybox stack, shader MLPs, cameras.

Every type validates its own invariants in `validate()`; constructors used by
the loaders call it so no partially valid state escapes. Trained scalar
payloads live in float32; geometry math elsewhere runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ValidationError

# Cubemap face order and orientation, matching GPU cubemap semantics.
# Each entry: (major_axis, major_sign, s_axis, s_sign, t_axis, t_sign); the
# face UV is uv = ((s + 1) / 2, (t + 1) / 2) with s = s_sign * q[s_axis] and
# t = t_sign * q[t_axis] evaluated on the unit cube coordinate q.
FACE_NAMES = ("px", "nx", "py", "ny", "pz", "nz")
FACE_AXES = (
    (0, +1, 2, -1, 1, -1),  # +X
    (0, -1, 2, +1, 1, -1),  # -X
    (1, +1, 0, +1, 2, +1),  # +Y
    (1, -1, 0, +1, 2, -1),  # -Y
    (2, +1, 0, +1, 1, -1),  # +Z
    (2, -1, 0, -1, 1, -1),  # -Z
)

MAX_CODEBOOK_SIZE = 65535  # index maps serialize as u16


@dataclass
class TexturedMesh:
    """Triangle mesh with optional per-vertex UVs (vertex i owns uv i)."""

    vertices: np.ndarray  # (N, 3) float32, meters, world frame
    faces: np.ndarray  # (F, 3) int32 vertex indices
    uvs: np.ndarray | None = None  # (N, 2) float32 in [0, 1]^2

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float32)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int32)
        if self.uvs is not None:
            self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float32)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def validate(self) -> "TexturedMesh":
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValidationError("vertices must be (N, 3)", field="mesh.vertices")
        if not np.isfinite(self.vertices).all():
            raise ValidationError("non-finite vertex positions", field="mesh.vertices")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValidationError("faces must be (F, 3)", field="mesh.faces")
        n = self.n_vertices
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise ValidationError("face index out of range", field="mesh.faces")
            f = self.faces
            degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degenerate.any():
                raise ValidationError(
                    f"{int(degenerate.sum())} degenerate faces (repeated vertex index)",
                    field="mesh.faces",
                )
        if self.uvs is not None:
            if self.uvs.shape != (n, 2):
                raise ValidationError(
                    f"uv count {self.uvs.shape} does not match vertex count {n}",
                    field="mesh.uvs",
                )
            if not np.isfinite(self.uvs).all():
                raise ValidationError("non-finite uvs", field="mesh.uvs")
            if self.uvs.size and (self.uvs.min() < 0.0 or self.uvs.max() > 1.0):
                raise ValidationError("uv components must lie in [0, 1]", field="mesh.uvs")
        return self


@dataclass
class Codebook:
    """K learnable D-dimensional latent codes plus per-code usage counters."""

    codes: np.ndarray  # (K, D) float32
    usage: np.ndarray | None = None  # (K,) int64, assignments since last reseed

    def __post_init__(self):
        self.codes = np.ascontiguousarray(self.codes, dtype=np.float32)
        if self.usage is None:
            self.usage = np.zeros(self.codes.shape[0], dtype=np.int64)
        else:
            self.usage = np.ascontiguousarray(self.usage, dtype=np.int64)

    @property
    def size(self) -> int:
        return int(self.codes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.codes.shape[1])

    def validate(self) -> "Codebook":
        if self.codes.ndim != 2 or self.codes.shape[0] < 1:
            raise ValidationError("codebook must be (K, D) with K >= 1", field="codebook.codes")
        if self.codes.shape[0] > MAX_CODEBOOK_SIZE:
            raise ValidationError(
                f"codebook size {self.codes.shape[0]} exceeds u16 index range",
                field="codebook.codes",
            )
        if not np.isfinite(self.codes).all():
            raise ValidationError("non-finite codebook entries", field="codebook.codes")
        if self.usage.shape != (self.codes.shape[0],):
            raise ValidationError("usage counter shape mismatch", field="codebook.usage")
        return self


@dataclass
class FeatureAtlas:
    """Learnable V x U x D feature image, optionally quantized against a codebook.

    When `indices` is set the effective (rendered) payload is
    `codebook.codes[indices]`; the raw `data` keeps receiving straight-through
    gradients during training.
    """

    data: np.ndarray  # (V, U, D) float32
    indices: np.ndarray | None = None  # (V, U) uint16 into the owning codebook
    codebook: Codebook | None = None  # shared reference, serialized scene-wide

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.indices is not None:
            self.indices = np.ascontiguousarray(self.indices, dtype=np.uint16)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def dim(self) -> int:
        return int(self.data.shape[2])

    @property
    def quantized(self) -> bool:
        return self.indices is not None and self.codebook is not None

    def effective(self) -> np.ndarray:
        """Payload seen by the renderer: dequantized codes when quantized."""
        if self.quantized:
            return self.codebook.codes[self.indices.astype(np.int64)]
        return self.data

    def validate(self, name: str = "atlas") -> "FeatureAtlas":
        if self.data.ndim != 3:
            raise ValidationError("atlas data must be (V, U, D)", field=f"{name}.data")
        if min(self.data.shape) < 1:
            raise ValidationError("atlas dimensions must be >= 1", field=f"{name}.data")
        if not np.isfinite(self.data).all():
            raise ValidationError("non-finite atlas payload", field=f"{name}.data")
        if (self.indices is None) != (self.codebook is None):
            raise ValidationError(
                "quantization needs both an index map and a codebook", field=f"{name}.indices"
            )
        if self.quantized:
            self.codebook.validate()
            if self.indices.shape != self.data.shape[:2]:
                raise ValidationError("index map shape mismatch", field=f"{name}.indices")
            if self.codebook.dim != self.dim:
                raise ValidationError(
                    f"codebook dim {self.codebook.dim} != atlas dim {self.dim}",
                    field=f"{name}.indices",
                )
            if self.indices.size and int(self.indices.max()) >= self.codebook.size:
                raise ValidationError("index map references code >= K", field=f"{name}.indices")
        return self


@dataclass
class SkyLayer:
    """One cuboid layer: center, half extents, and 6 face atlases in FACE_NAMES order."""

    center: np.ndarray  # (3,) float32, world meters
    half_extents: np.ndarray  # (3,) float32, > 0
    faces: list[FeatureAtlas]  # 6 entries: +X, -X, +Y, -Y, +Z, -Z

    def __post_init__(self):
        self.center = np.ascontiguousarray(self.center, dtype=np.float32)
        self.half_extents = np.ascontiguousarray(self.half_extents, dtype=np.float32)

    def contains(self, points: np.ndarray, *, strict: bool = True) -> np.ndarray:
        q = np.abs(np.atleast_2d(points) - self.center.astype(np.float64))
        e = self.half_extents.astype(np.float64)
        return (q < e).all(axis=1) if strict else (q <= e).all(axis=1)

    def validate(self, name: str = "sky_layer") -> "SkyLayer":
        if self.center.shape != (3,) or self.half_extents.shape != (3,):
            raise ValidationError("layer center/half_extents must be 3-vectors", field=name)
        if not (np.isfinite(self.center).all() and np.isfinite(self.half_extents).all()):
            raise ValidationError("non-finite layer geometry", field=name)
        if (self.half_extents <= 0).any():
            raise ValidationError("half extents must be positive", field=name)
        if len(self.faces) != 6:
            raise ValidationError("layer needs exactly 6 faces", field=name)
        for face_name, face in zip(FACE_NAMES, self.faces):
            face.validate(name=f"{name}.{face_name}")
        return self


@dataclass
class SkyboxStack:
    """Ordered near-to-far list of strictly nested cuboid layers."""

    layers: list[SkyLayer] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.layers)

    def validate(self) -> "SkyboxStack":
        for i, layer in enumerate(self.layers):
            layer.validate(name=f"sky.layer{i}")
        for i in range(len(self.layers) - 1):
            a, b = self.layers[i], self.layers[i + 1]
            gap = (
                b.half_extents.astype(np.float64)
                - np.abs(a.center.astype(np.float64) - b.center.astype(np.float64))
                - a.half_extents.astype(np.float64)
            )
            if (gap <= 0).any():
                raise ValidationError(
                    f"layer {i + 1} does not strictly contain layer {i}",
                    field=f"sky.layer{i + 1}",
                )
        return self


@dataclass
class Dense:
    """One affine layer with its activation tag ('relu', 'sigmoid' or 'linear')."""

    weight: np.ndarray  # (in, out) float32
    bias: np.ndarray  # (out,) float32
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.ascontiguousarray(self.weight, dtype=np.float32)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)

    @property
    def in_width(self) -> int:
        return int(self.weight.shape[0])

    @property
    def out_width(self) -> int:
        return int(self.weight.shape[1])


def _glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-lim, lim, size=(n_in, n_out)).astype(np.float32)


@dataclass
class ShaderMLP:
    """Tiny fully connected shader network.

    kind='foreground': `layers` maps concat(feature, view_dir) straight to an
    RGB head squashed by a logistic map.

    kind='background': `trunk` processes the feature alone, `opacity_head`
    reads the trunk output (so opacity is view independent by construction),
    and `color_layers` read concat(trunk output, view_dir).
    """

    kind: str  # 'foreground' | 'background'
    layers: list[Dense] = field(default_factory=list)
    trunk: list[Dense] = field(default_factory=list)
    opacity_head: Dense | None = None
    color_layers: list[Dense] = field(default_factory=list)

    @staticmethod
    def foreground(
        feature_dim: int, hidden: tuple[int, ...] = (32, 32, 32), *, rng: np.random.Generator
    ) -> "ShaderMLP":
        widths = [feature_dim + 3, *hidden, 3]
        layers = []
        for i in range(len(widths) - 1):
            act = "sigmoid" if i == len(widths) - 2 else "relu"
            layers.append(
                Dense(_glorot(rng, widths[i], widths[i + 1]), np.zeros(widths[i + 1], np.float32), act)
            )
        return ShaderMLP(kind="foreground", layers=layers)

    @staticmethod
    def background(
        feature_dim: int, hidden: tuple[int, ...] = (32, 32, 32), *, rng: np.random.Generator
    ) -> "ShaderMLP":
        # hidden[:-1] goes to the trunk, the last hidden width to the color head.
        trunk_widths = [feature_dim, *hidden[:-1]]
        trunk = [
            Dense(_glorot(rng, trunk_widths[i], trunk_widths[i + 1]),
                  np.zeros(trunk_widths[i + 1], np.float32), "relu")
            for i in range(len(trunk_widths) - 1)
        ]
        feat_w = trunk_widths[-1]
        opacity = Dense(_glorot(rng, feat_w, 1), np.zeros(1, np.float32), "sigmoid")
        color = [
            Dense(_glorot(rng, feat_w + 3, hidden[-1]), np.zeros(hidden[-1], np.float32), "relu"),
            Dense(_glorot(rng, hidden[-1], 3), np.zeros(3, np.float32), "sigmoid"),
        ]
        return ShaderMLP(kind="background", trunk=trunk, opacity_head=opacity, color_layers=color)

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        """Stable (name, array) pairs for serialization and the optimizer."""
        groups = [("layers", self.layers), ("trunk", self.trunk), ("color", self.color_layers)]
        for gname, group in groups:
            for i, d in enumerate(group):
                yield f"{gname}.{i}.weight", d.weight
                yield f"{gname}.{i}.bias", d.bias
        if self.opacity_head is not None:
            yield "opacity.weight", self.opacity_head.weight
            yield "opacity.bias", self.opacity_head.bias

    def feature_dim(self) -> int:
        if self.kind == "foreground":
            return self.layers[0].in_width - 3
        return self.trunk[0].in_width if self.trunk else self.opacity_head.in_width

    def validate(self, name: str = "mlp") -> "ShaderMLP":
        if self.kind not in ("foreground", "background"):
            raise ValidationError(f"unknown shader kind {self.kind!r}", field=name)
        for pname, arr in self.named_arrays():
            if not np.isfinite(arr).all():
                raise ValidationError("non-finite shader weights", field=f"{name}.{pname}")
        def check_chain(seq: list[Dense], label: str, first_in: int | None):
            prev = first_in
            for i, d in enumerate(seq):
                if d.bias.shape != (d.out_width,):
                    raise ValidationError("bias shape mismatch", field=f"{name}.{label}.{i}")
                if prev is not None and d.in_width != prev:
                    raise ValidationError(
                        f"layer widths do not chain ({prev} -> {d.in_width})",
                        field=f"{name}.{label}.{i}",
                    )
                prev = d.out_width
            return prev
        if self.kind == "foreground":
            if not self.layers:
                raise ValidationError("foreground shader has no layers", field=name)
            out = check_chain(self.layers, "layers", None)
            if out != 3 or self.layers[-1].activation != "sigmoid":
                raise ValidationError("foreground head must be 3-wide sigmoid", field=name)
        else:
            if self.opacity_head is None or not self.color_layers:
                raise ValidationError("background shader needs opacity and color heads", field=name)
            trunk_out = check_chain(self.trunk, "trunk", None)
            if self.opacity_head.in_width != trunk_out or self.opacity_head.out_width != 1:
                raise ValidationError("opacity head must read the trunk output", field=name)
            if self.opacity_head.activation != "sigmoid":
                raise ValidationError("opacity head must squash into [0, 1]", field=name)
            check_chain(self.color_layers, "color", trunk_out + 3)
            last = self.color_layers[-1]
            if last.out_width != 3 or last.activation != "sigmoid":
                raise ValidationError("color head must be 3-wide sigmoid", field=name)
        return self


@dataclass
class Camera:
    """Pinhole camera: world->camera rigid transform plus intrinsics."""

    world_to_camera: np.ndarray  # (4, 4) float64 row-major
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.world_to_camera = np.ascontiguousarray(self.world_to_camera, dtype=np.float64)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    def origin(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def validate(self) -> "Camera":
        if self.world_to_camera.shape != (4, 4):
            raise ValidationError("pose must be a 4x4 matrix", field="camera.world_to_camera")
        if not np.isfinite(self.world_to_camera).all():
            raise ValidationError("non-finite pose", field="camera.world_to_camera")
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise ValidationError("pose rotation is not orthonormal", field="camera.world_to_camera")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive", field="camera.fx")
        if self.width < 1 or self.height < 1:
            raise ValidationError("resolution must be at least 1x1", field="camera.width")
        return self

    def pixel_directions(self) -> np.ndarray:
        """Unit view directions through every pixel center, world frame, (H, W, 3) float64."""
        xs = (np.arange(self.width, dtype=np.float64) + 0.5 - self.cx) / self.fx
        ys = (np.arange(self.height, dtype=np.float64) + 0.5 - self.cy) / self.fy
        gx, gy = np.meshgrid(xs, ys)
        d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1)
        d_world = d_cam @ self.rotation  # (R^T · d) for row vectors
        return d_world / np.linalg.norm(d_world, axis=-1, keepdims=True)


@dataclass
class RenderLayers:
    """Per-layer color/opacity images; entry 0 is the foreground mesh layer."""

    colors: list[np.ndarray]  # each (H, W, 3) in [0, 1]
    opacities: list[np.ndarray]  # each (H, W) in [0, 1]

    def validate(self, *, foreground_binary: bool = True) -> "RenderLayers":
        if len(self.colors) != len(self.opacities) or not self.colors:
            raise ValidationError("mismatched or empty layer lists", field="layers")
        shape = self.opacities[0].shape
        for i, (c, o) in enumerate(zip(self.colors, self.opacities)):
            if o.shape != shape or c.shape != (*shape, 3):
                raise ValidationError("layers must share H x W", field=f"layers[{i}]")
            if o.size and (o.min() < 0.0 or o.max() > 1.0):
                raise ValidationError("opacity outside [0, 1]", field=f"layers[{i}]")
        if foreground_binary:
            o0 = self.opacities[0]
            if not np.isin(np.unique(o0), (0.0, 1.0)).all():
                raise ValidationError("foreground opacity must be a binary mask", field="layers[0]")
        last = self.opacities[-1]
        if len(self.opacities) > 1 and not (last == 1.0).all():
            raise ValidationError("farthest layer opacity must be forced to 1", field="layers[-1]")
        return self


@dataclass
class SceneConfig:
    """Per-scene structural choices kept alongside the payload."""

    feature_dim: int = 12
    codebook_size: int = 1024
    mlp_hidden: tuple[int, ...] = (32, 32, 32)
    shade_mode: str = "mlp"  # 'mlp' | 'flat' (flat = direct texture color ablation)
    view_encoding: str = "raw"  # 'raw' | 'freq2' experiment hook

    def validate(self) -> "SceneConfig":
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be >= 1", field="config.feature_dim")
        if self.shade_mode not in ("mlp", "flat"):
            raise ValidationError(f"unknown shade_mode {self.shade_mode!r}", field="config.shade_mode")
        if self.shade_mode == "flat" and self.feature_dim < 4:
            raise ValidationError("flat shading needs D >= 4 (rgb + opacity)", field="config.feature_dim")
        if self.view_encoding not in ("raw", "freq2"):
            raise ValidationError("view_encoding must be 'raw' or 'freq2'", field="config.view_encoding")
        return self


@dataclass
class SceneState:
    """Everything the renderer and trainer touch, as one validated snapshot."""

    mesh: TexturedMesh
    atlas: FeatureAtlas
    sky: SkyboxStack
    mlp_fg: ShaderMLP | None
    mlp_bg: ShaderMLP | None
    codebook_fg: Codebook | None
    codebook_sky: Codebook | None
    config: SceneConfig

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    @property
    def vq_enabled(self) -> bool:
        return self.codebook_fg is not None or self.codebook_sky is not None

    def sky_faces(self) -> Iterator[tuple[int, int, FeatureAtlas]]:
        """(layer_index, face_index, atlas) over all skybox faces, near to far."""
        for li, layer in enumerate(self.sky.layers):
            for fi, face in enumerate(layer.faces):
                yield li, fi, face

    def validate(self) -> "SceneState":
        self.config.validate()
        d = self.config.feature_dim
        self.mesh.validate()
        if self.mesh.uvs is None:
            raise ValidationError("scene mesh must carry per-vertex uvs", field="mesh.uvs")
        self.atlas.validate(name="atlas")
        if self.atlas.dim != d:
            raise ValidationError(f"foreground atlas dim {self.atlas.dim} != D={d}", field="atlas.data")
        self.sky.validate()
        for li, fi, face in self.sky_faces():
            if face.dim != d:
                raise ValidationError(
                    f"sky face dim {face.dim} != D={d}",
                    field=f"sky.layer{li}.{FACE_NAMES[fi]}",
                )
        if self.config.shade_mode == "mlp":
            if self.mlp_fg is None or (self.mlp_bg is None and len(self.sky) > 0):
                raise ValidationError("mlp shading requires shader networks", field="mlps")
            self.mlp_fg.validate(name="mlp_fg")
            if self.mlp_fg.kind != "foreground" or self.mlp_fg.feature_dim() != d:
                raise ValidationError("foreground shader input width != D + 3", field="mlp_fg")
            if self.mlp_bg is not None:
                self.mlp_bg.validate(name="mlp_bg")
                if self.mlp_bg.kind != "background" or self.mlp_bg.feature_dim() != d:
                    raise ValidationError("background shader input width != D", field="mlp_bg")
        for name, book in (("codebook_fg", self.codebook_fg), ("codebook_sky", self.codebook_sky)):
            if book is not None:
                book.validate()
                if book.dim != d:
                    raise ValidationError(f"{name} dim {book.dim} != D={d}", field=name)
        # Quantized atlases must point at the scene-level codebooks.
        if self.atlas.quantized and self.atlas.codebook is not self.codebook_fg:
            raise ValidationError("foreground atlas quantized against a foreign codebook", field="atlas")
        for li, fi, face in self.sky_faces():
            if face.quantized and face.codebook is not self.codebook_sky:
                raise ValidationError(
                    "sky face quantized against a foreign codebook",
                    field=f"sky.layer{li}.{FACE_NAMES[fi]}",
                )
        return self


def face_uv_from_unit(q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Map unit-cube boundary points to (face index, u, v).

    `q` is (N, 3) with the dominant |component| == 1 on the cuboid surface
    (points off the surface still map to the dominant-axis face). Ties pick
    the lowest face index in FACE_NAMES order.
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    aq = np.abs(q)
    axis = np.argmax(aq, axis=1)
    sign = np.take_along_axis(q, axis[:, None], axis=1)[:, 0] >= 0.0
    face = axis * 2 + np.where(sign, 0, 1)
    u = np.empty(len(q))
    v = np.empty(len(q))
    for f in range(6):
        m = face == f
        if not m.any():
            continue
        _, _, s_axis, s_sign, t_axis, t_sign = FACE_AXES[f]
        major = np.take_along_axis(aq[m], axis[m][:, None], axis=1)[:, 0]
        major = np.maximum(major, np.finfo(np.float64).tiny)
        u[m] = (s_sign * q[m, s_axis] / major + 1.0) * 0.5
        v[m] = (t_sign * q[m, t_axis] / major + 1.0) * 0.5
    return face.astype(np.int32), u, v
