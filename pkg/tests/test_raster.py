"""Rasterizer tests against independent scalar/ray-cast oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from texrast.backend import kernels
from texrast.errors import DataError
from texrast.raster import bilinear_sample, geometry_pass, rasterize_mesh, rasterize_skybox
from texrast.scene import Camera, FeatureAtlas, SkyboxStack, SkyLayer, TexturedMesh

from conftest import quad_mesh, simple_camera


# -- bilinear sampling -------------------------------------------------------------

def bilinear_ref(atlas: np.ndarray, u: float, v: float) -> np.ndarray:
    """Independent 64-bit scalar bilinear reference (clamp-to-edge)."""
    n_rows, n_cols, dim = atlas.shape
    x = u * n_cols - 0.5
    y = v * n_rows - 0.5
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    cx0 = min(max(x0, 0), n_cols - 1)
    cx1 = min(max(x0 + 1, 0), n_cols - 1)
    cy0 = min(max(y0, 0), n_rows - 1)
    cy1 = min(max(y0 + 1, 0), n_rows - 1)
    out = np.zeros(dim)
    for d in range(dim):
        out[d] = (
            (1 - fx) * (1 - fy) * float(atlas[cy0, cx0, d])
            + fx * (1 - fy) * float(atlas[cy0, cx1, d])
            + (1 - fx) * fy * float(atlas[cy1, cx0, d])
            + fx * fy * float(atlas[cy1, cx1, d])
        )
    return out


def test_bilinear_texel_center_returns_texel():
    rng = np.random.default_rng(0)
    atlas = rng.normal(size=(5, 7, 3)).astype(np.float32)
    for i in (0, 2, 4):
        for j in (0, 3, 6):
            u = (j + 0.5) / 7
            v = (i + 0.5) / 5
            vec, (idx, w) = bilinear_sample(atlas, u, v)
            assert np.array_equal(vec, atlas[i, j])
            assert w.max() == pytest.approx(1.0)


def test_bilinear_midpoint_averages_four_texels():
    atlas = np.zeros((2, 2, 1), dtype=np.float32)
    atlas[0, 0], atlas[0, 1], atlas[1, 0], atlas[1, 1] = 1.0, 2.0, 3.0, 4.0
    vec, _ = bilinear_sample(atlas, 0.5, 0.5)
    assert vec[0] == pytest.approx((1 + 2 + 3 + 4) / 4)


def test_bilinear_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    atlas = rng.normal(size=(7, 5, 4)).astype(np.float32)
    for _ in range(100):
        u, v = rng.uniform(0, 1, 2)
        vec, _ = bilinear_sample(atlas, float(u), float(v))
        ref = bilinear_ref(atlas.astype(np.float64), float(u), float(v))
        assert np.abs(vec - ref).max() < 1e-6


@given(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5))
@settings(max_examples=50, deadline=None)
def test_bilinear_clamps_to_edge(u, v):
    atlas = np.arange(12, dtype=np.float32).reshape(3, 4, 1)
    vec, _ = bilinear_sample(atlas, u, v)
    clamped, _ = bilinear_sample(atlas, min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0))
    assert np.allclose(vec, clamped, atol=1e-6)
    assert atlas.min() - 1e-6 <= vec[0] <= atlas.max() + 1e-6


# -- mesh rasterization --------------------------------------------------------------

def test_fullscreen_quad_constant_atlas():
    cam = simple_camera(width=12, height=12, fov=30.0)
    mesh = quad_mesh(z=0.0, half=5.0)  # much larger than the frustum at z=0
    atlas = FeatureAtlas(data=np.full((4, 4, 2), 3.25, dtype=np.float32))
    fb = rasterize_mesh(mesh, atlas, cam)
    assert fb.mask.all()
    assert np.allclose(fb.features, 3.25)
    assert np.abs(np.linalg.norm(fb.view_dirs, axis=-1) - 1.0).max() < 1e-6


def test_camera_looking_away_zero_coverage():
    cam = simple_camera(eye=(0, 0, -4), target=(0, 0, -8))  # looks away from quad at z=0
    fb = rasterize_mesh(quad_mesh(), np.zeros((2, 2, 1), np.float32), cam)
    assert not fb.mask.any()
    assert np.all(fb.features == 0.0)


def raycast(mesh: TexturedMesh, cam: Camera):
    """Brute-force per-pixel ray casting oracle (Moller-Trumbore, front faces)."""
    dirs = cam.pixel_directions()
    origin = cam.origin()
    h, w = cam.height, cam.width
    best_t = np.full((h, w), np.inf)
    best_tri = np.full((h, w), -1, dtype=np.int64)
    best_uv = np.zeros((h, w, 2))
    verts = mesh.vertices.astype(np.float64)
    uvs = mesh.uvs.astype(np.float64)
    for fi, (a, b, c) in enumerate(mesh.faces.astype(np.int64)):
        p0, p1, p2 = verts[a], verts[b], verts[c]
        e1, e2 = p1 - p0, p2 - p0
        normal = np.cross(e1, e2)
        for iy in range(h):
            for ix in range(w):
                d = dirs[iy, ix]
                if normal @ d >= 0:  # backface for outward CCW winding
                    continue
                pvec = np.cross(d, e2)
                det = e1 @ pvec
                if abs(det) < 1e-12:
                    continue
                inv = 1.0 / det
                tvec = origin - p0
                bu = (tvec @ pvec) * inv
                qvec = np.cross(tvec, e1)
                bv = (d @ qvec) * inv
                t = (e2 @ qvec) * inv
                if bu < 0 or bv < 0 or bu + bv > 1 or t <= 0:
                    continue
                if t < best_t[iy, ix]:
                    best_t[iy, ix] = t
                    best_tri[iy, ix] = fi
                    best_uv[iy, ix] = (
                        (1 - bu - bv) * uvs[a] + bu * uvs[b] + bv * uvs[c]
                    )
    return best_t, best_tri, best_uv


def test_rasterized_uv_matches_raycaster():
    cam = simple_camera(width=8, height=8, eye=(0.6, -0.3, -3.5), fov=45.0)
    verts = np.array(
        [[-1.0, -0.8, 0.2], [1.2, -1.0, -0.3], [0.1, 1.1, 0.4]], dtype=np.float32
    )
    uvs = np.array([[0.05, 0.1], [0.9, 0.2], [0.4, 0.95]], dtype=np.float32)
    mesh = TexturedMesh(vertices=verts, faces=np.array([[0, 2, 1]], np.int32), uvs=uvs)
    fb = rasterize_mesh(mesh, np.zeros((2, 2, 1), np.float32), cam)
    t_ref, tri_ref, uv_ref = raycast(mesh, cam)
    both = fb.mask & (tri_ref >= 0)
    assert both.sum() >= 8
    assert np.abs(fb.uv[both] - uv_ref[both]).max() < 1e-4


def test_depth_is_min_over_candidate_triangles():
    # Two overlapping quads plus a slanted triangle: <= 50 triangles total.
    rng = np.random.default_rng(3)
    cam = simple_camera(width=16, height=16, eye=(0.2, 0.1, -4.0), fov=40.0)
    near = quad_mesh(z=-0.5, half=0.7)
    far = quad_mesh(z=1.0, half=1.4)
    verts = np.concatenate([near.vertices, far.vertices])
    faces = np.concatenate([near.faces, far.faces + 4])
    uvs = np.concatenate([near.uvs, far.uvs])
    mesh = TexturedMesh(vertices=verts, faces=faces, uvs=uvs).validate()
    fb = rasterize_mesh(mesh, np.zeros((2, 2, 1), np.float32), cam)
    t_ref, tri_ref, _ = raycast(mesh, cam)
    # Oracle depth: view-space z of the nearest hit.
    both = fb.mask & (tri_ref >= 0)
    dirs = cam.pixel_directions()
    hit = cam.origin() + np.where(np.isfinite(t_ref), t_ref, 0.0)[..., None] * dirs
    z_ref = (hit @ cam.rotation.T + cam.translation)[..., 2]
    assert both.sum() > 50
    assert np.abs(fb.depth[both] - z_ref[both]).max() < 1e-6 * np.abs(z_ref[both]).max() + 1e-9


def test_perspective_correct_uv_on_ground_plane():
    # Ground plane y = -1 seen from above at an angle; uv is an affine map of (x, z).
    verts = np.array(
        [[-5, -1, -5], [5, -1, -5], [5, -1, 15], [-5, -1, 15]], dtype=np.float32
    )
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float32)
    faces = np.array([[0, 2, 1], [0, 3, 2]], np.int32)
    mesh = TexturedMesh(vertices=verts, faces=faces, uvs=uvs).validate()
    cam = simple_camera(width=24, height=24, eye=(0.0, 1.5, -3.0), target=(0.0, -1.0, 4.0), fov=55.0)
    fb = rasterize_mesh(mesh, np.zeros((2, 2, 1), np.float32), cam)
    dirs = cam.pixel_directions()
    origin = cam.origin()
    t_plane = (-1.0 - origin[1]) / dirs[..., 1]
    hit = origin + t_plane[..., None] * dirs
    u_ref = (hit[..., 0] + 5.0) / 10.0
    v_ref = (hit[..., 2] + 5.0) / 20.0
    m = fb.mask & (t_plane > 0)
    inside = m & (u_ref >= 0) & (u_ref <= 1) & (v_ref >= 0) & (v_ref <= 1)
    assert inside.sum() > 100
    assert np.abs(fb.uv[inside][:, 0] - u_ref[inside]).max() < 1e-4
    assert np.abs(fb.uv[inside][:, 1] - v_ref[inside]).max() < 1e-4


def test_top_left_rule_shared_edges_cover_exactly_once():
    from texrast._kernels_py import coverage_counts

    # Quad split along both diagonals and along a horizontal edge through
    # pixel centers: every interior pixel must be claimed exactly once.
    quads = {
        "diag_a": [[(2.5, 2.5), (10.5, 2.5), (10.5, 8.5)], [(2.5, 2.5), (10.5, 8.5), (2.5, 8.5)]],
        "diag_b": [[(2.5, 2.5), (10.5, 2.5), (2.5, 8.5)], [(10.5, 2.5), (10.5, 8.5), (2.5, 8.5)]],
        "horiz": [[(2.5, 2.5), (10.5, 2.5), (10.5, 5.5)], [(2.5, 2.5), (10.5, 5.5), (2.5, 5.5)],
                   [(2.5, 5.5), (10.5, 5.5), (10.5, 8.5)], [(2.5, 5.5), (10.5, 8.5), (2.5, 8.5)]],
    }
    for name, tris in quads.items():
        arr = np.array(tris, dtype=np.float64)
        counts = coverage_counts(
            np.ascontiguousarray(arr[..., 0]), np.ascontiguousarray(arr[..., 1]), 12, 14
        )
        assert counts.max() == 1, f"{name}: pixel claimed twice"
        assert counts.sum() == 8 * 6, f"{name}: wrong total coverage"


def test_raster_determinism_bitwise():
    cam = simple_camera(width=32, height=32, eye=(0.3, 0.2, -3.0))
    mesh = quad_mesh()
    atlas = np.random.default_rng(5).normal(size=(8, 8, 4)).astype(np.float32)
    a = rasterize_mesh(mesh, atlas, cam)
    b = rasterize_mesh(mesh, atlas, cam)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.depth, b.depth)
    assert np.array_equal(a.uv, b.uv)


def test_backface_culling_flag():
    cam = simple_camera()
    mesh = quad_mesh()
    flipped = TexturedMesh(
        vertices=mesh.vertices, faces=mesh.faces[:, [0, 2, 1]].copy(), uvs=mesh.uvs
    )
    fb = rasterize_mesh(flipped, np.zeros((2, 2, 1), np.float32), cam)
    assert not fb.mask.any()
    fb2 = rasterize_mesh(flipped, np.zeros((2, 2, 1), np.float32), cam, cull_backfaces=False)
    assert fb2.mask.any()


def test_near_plane_clipping_keeps_visible_part():
    # A ground strip extending behind the camera still rasterizes its front part.
    verts = np.array(
        [[-1, -1, -6], [1, -1, -6], [1, -1, 6], [-1, -1, 6]], dtype=np.float32
    )
    uvs = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.float32)
    mesh = TexturedMesh(vertices=verts, faces=np.array([[0, 2, 1], [0, 3, 2]], np.int32), uvs=uvs)
    cam = simple_camera(eye=(0.0, 0.0, 0.0), target=(0.0, -0.6, 5.0), width=16, height=16)
    fb = rasterize_mesh(mesh, np.zeros((2, 2, 1), np.float32), cam, cull_backfaces=False)
    assert fb.mask.any()
    assert np.isfinite(fb.depth[fb.mask]).all()
    assert (fb.depth[fb.mask] > 0).all()


# -- skybox rasterization ---------------------------------------------------------

def make_stack(extents=(4.0, 8.0), res=8, dim=3, center=(0, 0, 0), seed=0):
    rng = np.random.default_rng(seed)
    layers = []
    for e in extents:
        faces = [
            FeatureAtlas(data=rng.normal(size=(res, res, dim)).astype(np.float32))
            for _ in range(6)
        ]
        layers.append(
            SkyLayer(
                center=np.array(center, np.float32),
                half_extents=np.full(3, e, np.float32),
                faces=faces,
            )
        )
    return SkyboxStack(layers=layers).validate()


def test_sky_center_ray_hits_face_center():
    stack = make_stack()
    origin = np.zeros(3)
    dirs = np.eye(3)  # +X, +Y, +Z
    face = np.empty(3, np.int32)
    u = np.empty(3)
    v = np.empty(3)
    kernels.sky_exit_uv(
        origin, np.ascontiguousarray(dirs),
        np.zeros(3), np.full(3, 4.0), face, u, v,
    )
    assert list(face) == [0, 2, 4]
    assert np.allclose(u, 0.5) and np.allclose(v, 0.5)


def test_sky_axis_diagonal_ray():
    # Direction (1, 1, 1) from the center exits at the corner: |s| = |t| = 1.
    face = np.empty(1, np.int32)
    u = np.empty(1)
    v = np.empty(1)
    kernels.sky_exit_uv(
        np.zeros(3), np.ascontiguousarray(np.array([[1.0, 1.0, 1.0]])),
        np.zeros(3), np.full(3, 2.0), face, u, v,
    )
    assert face[0] == 0  # +X wins the axis tie (lowest index)
    # On +X: s = -z/|x| = -1 -> u = 0; t = -y/|x| = -1 -> v = 0.
    assert u[0] == pytest.approx(0.0, abs=1e-12)
    assert v[0] == pytest.approx(0.0, abs=1e-12)


FACE_TABLE = {  # independent copy for the oracle: axis, sign
    0: (0, 1), 1: (0, -1), 2: (1, 1), 3: (1, -1), 4: (2, 1), 5: (2, -1),
}
UV_TABLE = {  # face -> (s_axis, s_sign, t_axis, t_sign), GL cubemap convention
    0: (2, -1, 1, -1), 1: (2, 1, 1, -1), 2: (0, 1, 2, 1),
    3: (0, 1, 2, -1), 4: (0, 1, 1, -1), 5: (0, -1, 1, -1),
}


def slab_exit_oracle(o, d, center, half):
    lo = center - half
    hi = center + half
    t_exit = np.inf
    axis = -1
    for a in range(3):
        if d[a] == 0.0:
            continue
        t1 = (lo[a] - o[a]) / d[a]
        t2 = (hi[a] - o[a]) / d[a]
        t_far = max(t1, t2)
        if t_far < t_exit:
            t_exit = t_far
            axis = a
    p = o + t_exit * d
    face = axis * 2 + (0 if d[axis] >= 0 else 1)
    return p, face


def test_sky_exit_matches_slab_oracle():
    rng = np.random.default_rng(11)
    center = np.array([0.5, -1.0, 2.0])
    half = np.array([4.0, 3.0, 5.0])
    origin = center + np.array([1.2, -0.7, 2.2])
    dirs = rng.normal(size=(1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    face = np.empty(1000, np.int32)
    u = np.empty(1000)
    v = np.empty(1000)
    kernels.sky_exit_uv(origin, np.ascontiguousarray(dirs), center, half, face, u, v)
    for i in range(1000):
        p_ref, face_ref = slab_exit_oracle(origin, dirs[i], center, half)
        assert face[i] == face_ref
        # Reconstruct the exit point from (face, u, v) with an independent table.
        axis, sign = FACE_TABLE[int(face[i])]
        s_axis, s_sign, t_axis, t_sign = UV_TABLE[int(face[i])]
        q = np.empty(3)
        q[axis] = sign
        q[s_axis] = s_sign * (2 * u[i] - 1)
        q[t_axis] = t_sign * (2 * v[i] - 1)
        p = center + q * half
        assert np.abs(p - p_ref).max() < 1e-6


def test_sky_exit_point_on_boundary():
    stack = make_stack(extents=(4.0,), res=8)
    cam = simple_camera(width=16, height=16, eye=(0.5, 0.2, -1.0))
    fb = rasterize_skybox(stack, 0, cam)
    assert fb.mask.all()
    # Every pixel's sample came from some face with uv in [0, 1].
    total = sum(len(rec.pixels) for _, rec in fb.samples)
    assert total == 16 * 16


def test_sky_camera_outside_cuboid_errors():
    stack = make_stack(extents=(1.0, 2.0))
    cam = simple_camera(eye=(5.0, 0.0, 0.0), target=(0, 0, 0))
    with pytest.raises(DataError):
        rasterize_skybox(stack, 0, cam)
