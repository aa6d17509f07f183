"""Deterministic CPU deferred rasterizer.

Produces per-layer feature buffers: z-buffered perspective-correct mesh
rasterization with bilinear atlas sampling, and ray/cuboid exit sampling for
skybox layers. Every covered pixel records its 4-texel sampling footprint so
the training backward pass can scatter gradients into the atlases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import DataError, ValidationError
from .scene import Camera, FeatureAtlas, SkyboxStack, TexturedMesh

DEFAULT_ZNEAR = 1e-4


@dataclass
class SampleRecord:
    """Bilinear footprint for a compact list of covered pixels."""

    pixels: np.ndarray  # (N,) int64 flat indices into H*W
    idx: np.ndarray  # (N, 4) int64 flat texel ids (row-major V x U)
    weights: np.ndarray  # (N, 4) float64


@dataclass
class FeatureBuffer:
    """Screen-space rasterization output for one layer."""

    features: np.ndarray  # (H, W, D)
    mask: np.ndarray  # (H, W) bool coverage
    view_dirs: np.ndarray  # (H, W, 3) unit vectors, world frame
    depth: np.ndarray | None = None  # (H, W) float64, +inf where uncovered (mesh only)
    triangle_ids: np.ndarray | None = None  # (H, W) int32, -1 where uncovered
    uv: np.ndarray | None = None  # (H, W, 2) float64 rasterized uv
    samples: list[tuple[int, SampleRecord]] = field(default_factory=list)  # (face, record)

    @property
    def opacity(self) -> np.ndarray:
        return self.mask.astype(self.features.dtype)


def _project(points_cam: np.ndarray, cam: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = points_cam[..., 2]
    sx = cam.fx * points_cam[..., 0] / z + cam.cx
    sy = cam.fy * points_cam[..., 1] / z + cam.cy
    return sx, sy, 1.0 / z


def _clip_near(tri_cam: np.ndarray, tri_uv: np.ndarray, znear: float):
    """Sutherland-Hodgman clip of one camera-space triangle against z = znear.

    Returns (points (M, 3), uvs (M, 2)) of the clipped polygon, M in {0, 3, 4}.
    Attributes interpolate linearly along clipped edges.
    """
    pts, uvs = [], []
    for i in range(3):
        a, ua = tri_cam[i], tri_uv[i]
        b, ub = tri_cam[(i + 1) % 3], tri_uv[(i + 1) % 3]
        a_in = a[2] >= znear
        b_in = b[2] >= znear
        if a_in:
            pts.append(a)
            uvs.append(ua)
        if a_in != b_in:
            t = (znear - a[2]) / (b[2] - a[2])
            pts.append(a + t * (b - a))
            uvs.append(ua + t * (ub - ua))
    return np.asarray(pts), np.asarray(uvs)


def geometry_pass(
    mesh: TexturedMesh,
    cam: Camera,
    *,
    cull_backfaces: bool = True,
    znear: float = DEFAULT_ZNEAR,
    width: int | None = None,
    height: int | None = None,
    scale: float = 1.0,
):
    """Rasterize geometry only: per-pixel triangle id, depth, and uv.

    `scale` > 1 supersamples (intrinsics and resolution scaled together),
    used by visibility culling. Returns (tri, depth, u, v) arrays.
    """
    w = width if width is not None else int(round(cam.width * scale))
    h = height if height is not None else int(round(cam.height * scale))
    fx, fy, cx, cy = cam.fx * scale, cam.fy * scale, cam.cx * scale, cam.cy * scale
    scaled = Camera(cam.world_to_camera, fx, fy, cx, cy, w, h)

    tri_buf = np.full((h, w), -1, dtype=np.int32)
    depth_buf = np.full((h, w), np.inf, dtype=np.float64)
    u_buf = np.zeros((h, w), dtype=np.float64)
    v_buf = np.zeros((h, w), dtype=np.float64)
    if mesh.n_faces == 0:
        return tri_buf, depth_buf, u_buf, v_buf

    verts = mesh.vertices.astype(np.float64)
    uvs = mesh.uvs.astype(np.float64) if mesh.uvs is not None else np.zeros((mesh.n_vertices, 2))
    v_cam = verts @ cam.rotation.T + cam.translation
    f = mesh.faces.astype(np.int64)
    tri_cam = v_cam[f]  # (F, 3, 3)
    tri_uv = uvs[f]  # (F, 3, 2)
    z = tri_cam[..., 2]
    all_front = (z >= znear).all(axis=1)
    any_front = (z >= znear).any(axis=1)

    batches: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []  # (cam pts, uv, ids)
    if all_front.any():
        ids = np.nonzero(all_front)[0]
        batches.append((tri_cam[ids], tri_uv[ids], ids))
    straddle = np.nonzero(any_front & ~all_front)[0]
    for fi in straddle:
        poly, poly_uv = _clip_near(tri_cam[fi], tri_uv[fi], znear)
        for k in range(1, len(poly) - 1):  # fan triangulation keeps orientation
            pts = np.stack([poly[0], poly[k], poly[k + 1]])
            puv = np.stack([poly_uv[0], poly_uv[k], poly_uv[k + 1]])
            batches.append((pts[None], puv[None], np.array([fi], dtype=np.int64)))

    sx_l, sy_l, iw_l, uo_l, vo_l, id_l = [], [], [], [], [], []
    for pts, puv, ids in batches:
        sx, sy, invw = _project(pts, scaled)
        # Front faces wind counter-clockwise in y-up NDC, i.e. negative signed
        # area in y-down pixel coordinates; reorient survivors so the kernel's
        # interior-positive convention holds.
        area2 = (sx[:, 1] - sx[:, 0]) * (sy[:, 2] - sy[:, 0]) - (sy[:, 1] - sy[:, 0]) * (
            sx[:, 2] - sx[:, 0]
        )
        if cull_backfaces:
            keep = area2 < 0.0
            sx, sy, invw, puv, ids = sx[keep], sy[keep], invw[keep], puv[keep], ids[keep]
            order = np.broadcast_to(np.array([0, 2, 1]), (len(sx), 3))
        else:
            flip = (area2 < 0.0)[:, None]
            order = np.where(flip, np.array([0, 2, 1]), np.array([0, 1, 2]))
        if len(sx) == 0:
            continue
        take = lambda arr: np.take_along_axis(arr, order, axis=1)
        sx, sy, invw = take(sx), take(sy), take(invw)
        pu = np.take_along_axis(puv[..., 0], order, axis=1)
        pv = np.take_along_axis(puv[..., 1], order, axis=1)
        sx_l.append(sx)
        sy_l.append(sy)
        iw_l.append(invw)
        uo_l.append(pu * invw)
        vo_l.append(pv * invw)
        id_l.append(ids)

    if sx_l:
        cat = lambda xs: np.ascontiguousarray(np.concatenate(xs), dtype=np.float64)
        ids = np.ascontiguousarray(np.concatenate(id_l)).astype(np.int32)
        kernels.raster_triangles(
            cat(sx_l), cat(sy_l), cat(iw_l), cat(uo_l), cat(vo_l), ids,
            tri_buf, depth_buf, u_buf, v_buf,
        )
    return tri_buf, depth_buf, u_buf, v_buf


def sample_atlas(data: np.ndarray, us: np.ndarray, vs: np.ndarray):
    """Bilinear-sample rows of a (V, U, D) atlas at uv points (clamp-to-edge).

    Returns (features (N, D) in the atlas dtype, idx (N, 4), weights (N, 4)).
    """
    n_rows, n_cols, dim = data.shape
    idx, w = kernels.bilinear_setup(us, vs, n_rows, n_cols)
    out = np.empty((len(idx), dim), dtype=data.dtype)
    kernels.gather_rows(data.reshape(-1, dim), idx, w, out)
    return out, idx, w


def bilinear_sample(atlas: FeatureAtlas | np.ndarray, u: float, v: float):
    """Sample one uv location; returns (D-vector, (texel ids, weights))."""
    data = atlas.effective() if isinstance(atlas, FeatureAtlas) else np.asarray(atlas)
    if not (np.isfinite(u) and np.isfinite(v)):
        raise ValidationError("uv must be finite", field="uv")
    vec, idx, w = sample_atlas(data, np.atleast_1d(float(u)), np.atleast_1d(float(v)))
    return vec[0], (idx[0], w[0])


def rasterize_mesh(
    mesh: TexturedMesh,
    atlas: FeatureAtlas | np.ndarray,
    cam: Camera,
    *,
    cull_backfaces: bool = True,
    znear: float = DEFAULT_ZNEAR,
    dtype=np.float32,
) -> FeatureBuffer:
    """Deferred foreground pass: coverage mask, depth, uv, bilinear features."""
    data = atlas.effective() if isinstance(atlas, FeatureAtlas) else np.asarray(atlas)
    tri, depth, u, v = geometry_pass(mesh, cam, cull_backfaces=cull_backfaces, znear=znear)
    h, w_px = tri.shape
    dim = data.shape[2]
    mask = tri >= 0
    dirs = cam.pixel_directions().astype(dtype)
    features = np.zeros((h, w_px, dim), dtype=dtype)
    samples: list[tuple[int, SampleRecord]] = []
    pix = np.nonzero(mask.reshape(-1))[0]
    if len(pix):
        us = u.reshape(-1)[pix]
        vs = v.reshape(-1)[pix]
        feats, idx, wts = sample_atlas(np.ascontiguousarray(data, dtype=dtype), us, vs)
        features.reshape(-1, dim)[pix] = feats
        samples.append((0, SampleRecord(pixels=pix, idx=idx, weights=wts)))
    return FeatureBuffer(
        features=features,
        mask=mask,
        view_dirs=dirs,
        depth=depth,
        triangle_ids=tri,
        uv=np.stack([u, v], axis=-1),
        samples=samples,
    )


def rasterize_skybox(
    stack: SkyboxStack,
    layer: int,
    cam: Camera,
    *,
    dtype=np.float32,
    dirs: np.ndarray | None = None,
) -> FeatureBuffer:
    """Background pass for one cuboid layer: exit-face bilinear features.

    `layer` indexes stack.layers (0 = nearest). The camera origin must lie
    strictly inside the layer's cuboid. Pass precomputed float64 `dirs` to
    share ray directions across layers.
    """
    lay = stack.layers[layer]
    origin = cam.origin()
    if not lay.contains(origin[None], strict=True)[0]:
        raise DataError(
            f"camera origin {origin.tolist()} outside sky layer {layer} cuboid",
            field=f"sky.layer{layer}",
        )
    if dirs is None:
        dirs = cam.pixel_directions()
    h, w_px = dirs.shape[:2]
    flat_dirs = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
    n = flat_dirs.shape[0]
    face = np.empty(n, dtype=np.int32)
    us = np.empty(n, dtype=np.float64)
    vs = np.empty(n, dtype=np.float64)
    kernels.sky_exit_uv(
        np.ascontiguousarray(origin),
        flat_dirs,
        np.ascontiguousarray(lay.center, dtype=np.float64),
        np.ascontiguousarray(lay.half_extents, dtype=np.float64),
        face,
        us,
        vs,
    )
    dim = lay.faces[0].dim
    features = np.zeros((h, w_px, dim), dtype=dtype)
    samples: list[tuple[int, SampleRecord]] = []
    flat_feat = features.reshape(-1, dim)
    for f in range(6):
        pix = np.nonzero(face == f)[0]
        if not len(pix):
            continue
        data = np.ascontiguousarray(lay.faces[f].effective(), dtype=dtype)
        feats, idx, wts = sample_atlas(data, us[pix], vs[pix])
        flat_feat[pix] = feats
        samples.append((f, SampleRecord(pixels=pix, idx=idx, weights=wts)))
    return FeatureBuffer(
        features=features,
        mask=np.ones((h, w_px), dtype=bool),
        view_dirs=dirs.astype(dtype),
        samples=samples,
    )
