"""Synthetic scenes and procedural targets for tests, benchmarks and demos.

The "room" dataset is a cube with a procedural view-dependent surface pattern
floating inside a two-layer skybox whose far layer shows a smooth emissive
pattern. Targets are rendered with the same rasterization geometry the model
uses, so appearance is the only thing left to learn.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import kernels
from .images import write_image
from .raster import geometry_pass
from .scene import (
    Camera,
    Codebook,
    FeatureAtlas,
    SceneConfig,
    SceneState,
    ShaderMLP,
    SkyboxStack,
    SkyLayer,
    TexturedMesh,
)
from .scene_io import camera_to_json
from .train import TrainView
from . import vq


def look_at_camera(
    eye, target, *, up=(0.0, 1.0, 0.0), fov_deg: float = 55.0, width: int = 64, height: int = 64
) -> Camera:
    """OpenCV-convention camera (x right, y down, z forward) looking at `target`."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    if abs(fwd @ upv) > 0.999:
        upv = np.array([0.0, 0.0, 1.0])
    x_c = np.cross(fwd, upv)
    x_c /= np.linalg.norm(x_c)
    y_c = np.cross(fwd, x_c)
    rot = np.stack([x_c, y_c, fwd])
    pose = np.eye(4)
    pose[:3, :3] = rot
    pose[:3, 3] = -rot @ eye
    f = 0.5 * width / np.tan(np.radians(fov_deg) / 2.0)
    return Camera(
        world_to_camera=pose, fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height,
    ).validate()


def cube_mesh(half: float = 1.0) -> TexturedMesh:
    """Axis-aligned cube with outward faces (no uvs); 24 vertices, 12 faces."""
    verts = []
    faces = []
    axes = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for axis, ua, va in axes:
        for sign in (1.0, -1.0):
            base = len(verts)
            for du, dv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
                p = np.zeros(3)
                p[axis] = sign * half
                p[ua] = du * half
                p[va] = dv * half
                verts.append(p)
            if sign > 0:
                faces += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
            else:
                faces += [[base, base + 2, base + 1], [base, base + 3, base + 2]]
    return TexturedMesh(
        vertices=np.array(verts, dtype=np.float32),
        faces=np.array(faces, dtype=np.int32),
    ).validate()


def _sky_layer(center, half_extent: float, face_res: int, dim: int, rng) -> SkyLayer:
    faces = [
        FeatureAtlas(data=rng.normal(0.0, 0.1, size=(face_res, face_res, dim)).astype(np.float32))
        for _ in range(6)
    ]
    return SkyLayer(
        center=np.asarray(center, dtype=np.float32),
        half_extents=np.full(3, half_extent, dtype=np.float32),
        faces=faces,
    )


@dataclass
class RoomSpec:
    atlas_resolution: int = 128
    face_resolution: int = 32
    feature_dim: int = 8
    codebook_size: int = 256
    mlp_hidden: tuple[int, ...] = (32, 32, 32)
    image_size: int = 64
    n_train: int = 16
    n_val: int = 4
    orbit_radius: float = 3.2
    sky_extents: tuple[float, ...] = (10.0, 20.0)
    shade_mode: str = "mlp"
    seed: int = 0
    texture_freq: float = 1.0  # spatial frequency multiplier of the surface pattern
    view_amp: float = 1.0  # strength of the view-dependent shading terms
    sky_freq: float = 1.0


def make_room_scene(spec: RoomSpec) -> SceneState:
    from .meshpipe import generate_uv_atlas

    rng = np.random.default_rng([spec.seed, 11])
    mesh = generate_uv_atlas(cube_mesh(1.0), atlas_resolution=spec.atlas_resolution)
    d = spec.feature_dim
    atlas = FeatureAtlas(
        data=rng.normal(0.0, 0.1, size=(spec.atlas_resolution, spec.atlas_resolution, d)).astype(
            np.float32
        )
    )
    sky = SkyboxStack(
        layers=[_sky_layer((0, 0, 0), e, spec.face_resolution, d, rng) for e in spec.sky_extents]
    )
    config = SceneConfig(
        feature_dim=d,
        codebook_size=spec.codebook_size,
        mlp_hidden=spec.mlp_hidden,
        shade_mode=spec.shade_mode,
    )
    mlp_fg = mlp_bg = None
    if spec.shade_mode == "mlp":
        mlp_fg = ShaderMLP.foreground(d, spec.mlp_hidden, rng=np.random.default_rng([spec.seed, 21]))
        mlp_bg = ShaderMLP.background(d, spec.mlp_hidden, rng=np.random.default_rng([spec.seed, 22]))
    return SceneState(
        mesh=mesh, atlas=atlas, sky=sky, mlp_fg=mlp_fg, mlp_bg=mlp_bg,
        codebook_fg=None, codebook_sky=None, config=config,
    ).validate()


def room_cameras(spec: RoomSpec) -> list[Camera]:
    total = spec.n_train + spec.n_val
    cams = []
    for i in range(total):
        theta = 2.0 * np.pi * i / total
        height = 1.1 * np.sin(3.0 * theta + 0.4)
        eye = (spec.orbit_radius * np.cos(theta), height, spec.orbit_radius * np.sin(theta))
        cams.append(
            look_at_camera(eye, (0.0, 0.0, 0.0), width=spec.image_size, height=spec.image_size)
        )
    return cams


def _surface_color(u, v, d_dot_n):
    """Procedural cube appearance: smooth albedo modulated by view angle."""
    tau = 2.0 * np.pi
    base = np.stack(
        [
            0.5 + 0.34 * np.sin(tau * (2.0 * u + 0.30)) * np.cos(tau * 1.5 * v),
            0.5 + 0.34 * np.sin(tau * (1.0 * u + 2.0 * v) + 0.21),
            0.5 + 0.34 * np.cos(tau * (1.3 * v + 0.6 * u) + 0.73),
        ],
        axis=-1,
    )
    facing = np.clip(-d_dot_n, 0.0, 1.0)
    grazing = np.clip(1.0 + d_dot_n, 0.0, 1.0) ** 2
    color = base * (0.70 + 0.30 * facing)[..., None]
    color = color + 0.22 * grazing[..., None] * np.array([1.0, 0.95, 0.8])
    return np.clip(color, 0.0, 1.0)


def _sky_color(q):
    """Smooth emissive pattern on the far box, a function of the exit point."""
    x, y, z = q[..., 0], q[..., 1], q[..., 2]
    c = np.stack(
        [
            0.55 + 0.30 * np.sin(1.7 * x + 0.2) * np.cos(1.1 * y),
            0.55 + 0.30 * np.sin(1.3 * y + 2.0 + 0.5 * z),
            0.60 + 0.30 * np.sin(2.1 * z + 4.0 + 0.4 * x),
        ],
        axis=-1,
    )
    return np.clip(c, 0.0, 1.0)


def render_room_target(state: SceneState, cam: Camera) -> np.ndarray:
    """Ground-truth image: procedural surface on the mesh, pattern on the far box."""
    tri, _, u, v = geometry_pass(state.mesh, cam)
    mask = tri >= 0
    dirs = cam.pixel_directions()
    far = state.sky.layers[-1]
    origin = cam.origin()
    flat_dirs = np.ascontiguousarray(dirs.reshape(-1, 3))
    n = flat_dirs.shape[0]
    face = np.empty(n, dtype=np.int32)
    us = np.empty(n)
    vs = np.empty(n)
    kernels.sky_exit_uv(
        np.ascontiguousarray(origin),
        flat_dirs,
        np.ascontiguousarray(far.center, dtype=np.float64),
        np.ascontiguousarray(far.half_extents, dtype=np.float64),
        face, us, vs,
    )
    # Recover the exit point from (face, uv) to evaluate the sky pattern.
    from .scene import FACE_AXES

    q = np.empty((n, 3))
    for f in range(6):
        m = face == f
        if not m.any():
            continue
        axis, sign, s_axis, s_sign, t_axis, t_sign = FACE_AXES[f]
        q[m, axis] = sign
        q[m, s_axis] = s_sign * (2.0 * us[m] - 1.0)
        q[m, t_axis] = t_sign * (2.0 * vs[m] - 1.0)
    image = _sky_color(q).reshape(cam.height, cam.width, 3)

    if mask.any():
        p = state.mesh.vertices.astype(np.float64)[state.mesh.faces.astype(np.int64)]
        nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        normals = nrm / np.maximum(np.linalg.norm(nrm, axis=1, keepdims=True), 1e-12)
        pix_tri = tri[mask]
        d_dot_n = (dirs[mask] * normals[pix_tri]).sum(axis=1)
        image[mask] = _surface_color(u[mask], v[mask], d_dot_n)
    return image.astype(np.float32)


def make_room_dataset(spec: RoomSpec) -> tuple[SceneState, list[TrainView], list[TrainView]]:
    """Scene plus train/val views; every (n_train+n_val)//n_val-th view is held out."""
    state = make_room_scene(spec)
    cams = room_cameras(spec)
    total = len(cams)
    stride = max(2, total // max(1, spec.n_val))
    train, val = [], []
    for i, cam in enumerate(cams):
        img = render_room_target(state, cam)
        view = TrainView(camera=cam, image=img, name=f"view{i:02d}")
        if i % stride == stride - 1 and len(val) < spec.n_val:
            val.append(view)
        else:
            train.append(view)
    return state, train, val


def write_room_dataset(out_dir: str | Path, spec: RoomSpec) -> dict:
    """Materialize the dataset for the CLI: scene dir, PNG targets, view files."""
    from .scene_io import save_scene

    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    state, train, val = make_room_dataset(spec)
    save_scene(state, out / "scene")

    def dump(views: list[TrainView], name: str) -> Path:
        entries = []
        for v in views:
            img_path = f"images/{v.name}.png"
            write_image(out / img_path, v.image)
            entry = camera_to_json(v.camera)
            entry["image"] = img_path
            entry["name"] = v.name
            entries.append(entry)
        path = out / name
        path.write_text(json.dumps(entries, indent=1))
        return path

    train_path = dump(train, "views_train.json")
    val_path = dump(val, "views_val.json")
    return {
        "scene": out / "scene",
        "train_views": train_path,
        "val_views": val_path,
        "n_train": len(train),
        "n_val": len(val),
    }


# -- micro scene for gradient checking ----------------------------------------------

@dataclass
class MicroSpec:
    atlas_resolution: int = 8
    face_resolution: int = 4
    feature_dim: int = 4
    codebook_size: int = 8
    mlp_hidden: tuple[int, ...] = (8, 8, 8)
    image_size: int = 12
    sky_extents: tuple[float, ...] = (5.0, 9.0)
    shade_mode: str = "mlp"
    seed: int = 0
    with_vq: bool = True


def make_micro_scene(spec: MicroSpec = MicroSpec()) -> tuple[SceneState, TrainView]:
    """Tiny quad + 2-layer skybox scene with every parameter class active."""
    rng = np.random.default_rng([spec.seed, 31])
    verts = np.array(
        [[-1.2, -1.0, 0.0], [1.0, -1.1, 0.0], [1.1, 1.2, 0.0], [-1.0, 1.0, 0.0]], dtype=np.float32
    )
    uvs = np.array([[0.1, 0.1], [0.9, 0.12], [0.88, 0.9], [0.12, 0.88]], dtype=np.float32)
    faces = np.array([[0, 2, 1], [0, 3, 2]], dtype=np.int32)
    mesh = TexturedMesh(vertices=verts, faces=faces, uvs=uvs)
    d = spec.feature_dim
    atlas = FeatureAtlas(
        data=rng.normal(0.0, 0.6, size=(spec.atlas_resolution, spec.atlas_resolution, d)).astype(
            np.float32
        )
    )
    sky = SkyboxStack(
        layers=[_sky_layer((0, 0, 0), e, spec.face_resolution, d, rng) for e in spec.sky_extents]
    )
    mlp_fg = mlp_bg = None
    if spec.shade_mode == "mlp":
        mlp_fg = ShaderMLP.foreground(d, spec.mlp_hidden, rng=np.random.default_rng([spec.seed, 41]))
        mlp_bg = ShaderMLP.background(d, spec.mlp_hidden, rng=np.random.default_rng([spec.seed, 42]))
    config = SceneConfig(
        feature_dim=d, codebook_size=spec.codebook_size, mlp_hidden=spec.mlp_hidden,
        shade_mode=spec.shade_mode,
    )
    state = SceneState(
        mesh=mesh, atlas=atlas, sky=sky, mlp_fg=mlp_fg, mlp_bg=mlp_bg,
        codebook_fg=None, codebook_sky=None, config=config,
    )
    if spec.with_vq:
        k = spec.codebook_size
        fg_rows = atlas.data.reshape(-1, d)
        state.codebook_fg = Codebook(codes=fg_rows[rng.integers(0, len(fg_rows), k)].copy())
        res = vq.quantize(atlas.data, state.codebook_fg)
        atlas.indices = res.indices
        atlas.codebook = state.codebook_fg
        pool = np.concatenate([f.data.reshape(-1, d) for lay in sky.layers for f in lay.faces])
        state.codebook_sky = Codebook(codes=pool[rng.integers(0, len(pool), k)].copy())
        for lay in sky.layers:
            for f in lay.faces:
                r = vq.quantize(f.data, state.codebook_sky)
                f.indices = r.indices
                f.codebook = state.codebook_sky
    state.validate()
    cam = look_at_camera(
        (0.4, 0.3, -3.0), (0.0, 0.0, 0.0), width=spec.image_size, height=spec.image_size
    )
    target = rng.uniform(0.1, 0.9, size=(spec.image_size, spec.image_size, 3)).astype(np.float32)
    view = TrainView(camera=cam, image=target, name="micro")
    return state, view.validate()
