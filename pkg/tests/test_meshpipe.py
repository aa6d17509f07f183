"""Mesh pipeline: clustering, quadric decimation, culling, UV atlas generation."""

import numpy as np
import pytest

from texrast.errors import DataError, ValidationError
from texrast.meshpipe import (
    DecimationConfig,
    cluster_vertices,
    cull_invisible,
    decimate,
    generate_uv_atlas,
    uv_ownership_collisions,
)
from texrast.scene import TexturedMesh
from texrast.synth import cube_mesh, look_at_camera

from conftest import quad_mesh, simple_camera


# -- clustering ---------------------------------------------------------------------

def test_cluster_merges_close_vertices():
    verts = np.array([[0, 0, 0], [0.001, 0, 0], [1, 0, 0], [0, 1, 0]], np.float32)
    faces = np.array([[0, 2, 3], [1, 2, 3]], np.int32)
    mesh = TexturedMesh(vertices=verts, faces=faces)
    out = cluster_vertices(mesh, 0.01)
    assert out.n_vertices == 3
    assert out.n_faces == 1  # the two faces became duplicates


def test_cluster_tiny_cell_is_identity_up_to_dedup():
    rng = np.random.default_rng(0)
    verts = rng.uniform(size=(20, 3)).astype(np.float32)
    faces = np.array([[0, 1, 2], [3, 4, 5], [0, 1, 2]], np.int32)  # one duplicate
    mesh = TexturedMesh(vertices=verts, faces=faces)
    out = cluster_vertices(mesh, 1e-6)
    assert out.n_vertices == 20
    # Single-member cells keep positions bitwise.
    order = np.lexsort(out.vertices.T)
    order_in = np.lexsort(verts.T)
    assert np.array_equal(out.vertices[order], verts[order_in])
    assert out.n_faces == 2


def test_cluster_duplicated_cube_corners():
    """Unit cube with every corner triplicated (24 verts) -> 8 verts, 12 faces."""
    cube = cube_mesh(0.5)  # 24 vertices (3 per corner), 12 faces
    assert cube.n_vertices == 24
    out = cluster_vertices(cube, 0.1)
    assert out.n_vertices == 8
    assert out.n_faces == 12
    # Enumerate grid cells by hand: corners at (+-0.5)^3 -> 8 distinct cells.
    cells = {tuple(np.floor((v - out.vertices.min(0)) / 0.1).astype(int)) for v in out.vertices}
    assert len(cells) == 8


def test_cluster_rejects_bad_cell():
    with pytest.raises(ValidationError):
        cluster_vertices(quad_mesh(), 0.0)


# -- decimation ---------------------------------------------------------------------

def grid_mesh(n=10, size=1.0):
    xs = np.linspace(0, size, n)
    verts = np.array([[x, y, 0.0] for y in xs for x in xs], dtype=np.float32)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            faces.append([a, a + 1, a + n])
            faces.append([a + 1, a + n + 1, a + n])
    return TexturedMesh(vertices=verts, faces=np.array(faces, np.int32)).validate()


def covered_area(mesh: TexturedMesh) -> float:
    """Union area of the (coplanar) triangles via shapely."""
    from shapely.geometry import Polygon
    from shapely.ops import unary_union

    polys = []
    for f in mesh.faces:
        tri = mesh.vertices[f][:, :2].astype(np.float64)
        poly = Polygon(tri)
        if poly.area > 0:
            polys.append(poly)
    return float(unary_union(polys).area)


def test_decimate_planar_grid_preserves_area():
    mesh = grid_mesh(10)
    assert covered_area(mesh) == pytest.approx(1.0, abs=1e-9)
    out = decimate(mesh, DecimationConfig(target_vertices=4))
    assert out.n_vertices <= 4
    assert covered_area(out) == pytest.approx(1.0, abs=1e-6)


def test_decimate_target_equal_count_is_identity():
    mesh = grid_mesh(4)
    out = decimate(mesh, DecimationConfig(target_vertices=mesh.n_vertices))
    assert np.array_equal(out.vertices, mesh.vertices)
    assert np.array_equal(out.faces, mesh.faces)


def test_decimate_cube_identity_and_flagged_above_count():
    cube = cluster_vertices(cube_mesh(1.0), 0.1)  # welded: 8 verts
    out = decimate(cube, DecimationConfig(target_vertices=8))
    assert out.n_vertices == 8
    over = decimate(cube, DecimationConfig(target_vertices=100))
    assert over.n_vertices == 8  # returned unchanged, warning logged


def test_decimate_reduces_sphere_like_mesh():
    rng = np.random.default_rng(1)
    # Fibonacci-ish sphere triangulated via convex hull.
    from scipy.spatial import ConvexHull

    pts = rng.normal(size=(200, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    hull = ConvexHull(pts)
    mesh = TexturedMesh(
        vertices=pts.astype(np.float32), faces=hull.simplices.astype(np.int32)
    )
    out = decimate(mesh, DecimationConfig(target_vertices=40))
    assert 4 <= out.n_vertices <= 40
    assert out.n_faces > 0
    out.validate()
    # Surviving geometry stays near the unit sphere (quadric minimization).
    r = np.linalg.norm(out.vertices.astype(np.float64), axis=1)
    assert r.min() > 0.8 and r.max() < 1.2


def test_pipeline_monotonicity():
    mesh = grid_mesh(8)
    clustered = cluster_vertices(mesh, 0.05)
    assert clustered.n_vertices <= mesh.n_vertices
    assert clustered.n_faces <= mesh.n_faces
    decimated = decimate(clustered, DecimationConfig(target_vertices=16))
    assert decimated.n_vertices <= clustered.n_vertices
    assert decimated.n_faces <= clustered.n_faces
    cam = simple_camera(eye=(0.5, 0.5, -3.0), target=(0.5, 0.5, 0.0))
    culled = cull_invisible(decimated, [cam])
    assert culled.n_vertices <= decimated.n_vertices
    assert culled.n_faces <= decimated.n_faces


# -- visibility culling ----------------------------------------------------------

def test_cull_removes_occluded_quad():
    near = quad_mesh(z=0.0, half=1.0)
    far = quad_mesh(z=2.0, half=1.0)  # same footprint, fully hidden
    mesh = TexturedMesh(
        vertices=np.concatenate([near.vertices, far.vertices]),
        faces=np.concatenate([near.faces, far.faces + 4]),
        uvs=np.concatenate([near.uvs, far.uvs]),
    ).validate()
    cam = simple_camera(eye=(0, 0, -4.0))
    out = cull_invisible(mesh, [cam])
    assert out.n_faces == 2
    assert np.allclose(out.vertices[:, 2], 0.0)


def test_cull_removes_backfacing_quad():
    mesh = quad_mesh()
    cam_behind = simple_camera(eye=(0, 0, 4.0), target=(0, 0, 0))  # sees the back
    out = cull_invisible(mesh, [cam_behind])
    assert out.n_faces == 0


def test_cull_empty_camera_list():
    with pytest.raises(ValidationError):
        cull_invisible(quad_mesh(), [])


def per_face_visibility_oracle(mesh, cams, supersample=2):
    """Brute-force: cast a ray through every supersampled pixel, nearest front hit."""
    import itertools

    visible = set()
    verts = mesh.vertices.astype(np.float64)
    for cam in cams:
        w, h = cam.width * supersample, cam.height * supersample
        from texrast.scene import Camera

    # reuse the ray caster from the raster tests
    from test_raster import raycast
    from texrast.scene import Camera

    for cam in cams:
        scaled = Camera(
            cam.world_to_camera, cam.fx * supersample, cam.fy * supersample,
            cam.cx * supersample, cam.cy * supersample,
            cam.width * supersample, cam.height * supersample,
        )
        _, tri, _ = raycast(mesh, scaled)
        visible.update(np.unique(tri[tri >= 0]).tolist())
    return visible


def test_cull_closed_cube_matches_ray_oracle():
    cube = cluster_vertices(cube_mesh(1.0), 0.1)
    cube = TexturedMesh(vertices=cube.vertices, faces=cube.faces,
                        uvs=np.full((cube.n_vertices, 2), 0.5, np.float32)).validate()
    # Interior octahedron: never visible from outside.
    inner = np.array(
        [[0.3, 0, 0], [-0.3, 0, 0], [0, 0.3, 0], [0, -0.3, 0], [0, 0, 0.3], [0, 0, -0.3]],
        np.float32,
    )
    inner_faces = np.array(
        [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]],
        np.int32,
    ) + cube.n_vertices
    mesh = TexturedMesh(
        vertices=np.concatenate([cube.vertices, inner]),
        faces=np.concatenate([cube.faces, inner_faces]),
        uvs=np.concatenate([cube.uvs, np.full((6, 2), 0.5, np.float32)]),
    ).validate()
    # Slightly off-axis cameras from all six sides avoid edge-tie ambiguity.
    eyes = [(4.1, 0.3, 0.2), (-4.2, 0.1, -0.3), (0.2, 4.1, 0.3),
            (0.3, -4.0, 0.1), (0.1, 0.2, 4.2), (-0.2, 0.3, -4.1)]
    cams = [look_at_camera(e, (0, 0, 0), width=24, height=24) for e in eyes]
    out = cull_invisible(mesh, cams)
    assert out.n_faces == 12  # all cube faces kept, octahedron gone
    oracle = per_face_visibility_oracle(mesh, cams)
    assert oracle == set(range(12))
    # Idempotence for a fixed camera set.
    again = cull_invisible(out, cams)
    assert again.n_faces == out.n_faces
    assert np.array_equal(again.faces, out.faces)


# -- UV atlas -------------------------------------------------------------------

def test_uv_atlas_single_triangle():
    mesh = TexturedMesh(
        vertices=np.array([[0, 0, 0], [2, 0, 0], [0, 1, 0]], np.float32),
        faces=np.array([[0, 1, 2]], np.int32),
    )
    out = generate_uv_atlas(mesh, atlas_resolution=64)
    assert out.n_faces == 1
    assert out.uvs.min() >= 0 and out.uvs.max() <= 1
    tri = out.uvs[out.faces[0]].astype(np.float64)
    area = 0.5 * abs(np.cross(tri[1] - tri[0], tri[2] - tri[0]))
    assert area > 0


def test_uv_atlas_two_disconnected_triangles():
    mesh = TexturedMesh(
        vertices=np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]], np.float32
        ),
        faces=np.array([[0, 1, 2], [3, 4, 5]], np.int32),
    )
    out = generate_uv_atlas(mesh, atlas_resolution=64)
    assert out.n_faces == 2
    assert uv_ownership_collisions(out, 64) == 0
    # Charts do not share any vertex.
    assert out.n_vertices == 6


def test_uv_atlas_cube_charts_no_collisions():
    out = generate_uv_atlas(cube_mesh(1.0), atlas_resolution=1024)
    assert out.n_faces == 12
    # 6+ charts: every cube side is its own near-planar chart.
    assert out.n_vertices >= 24
    assert uv_ownership_collisions(out, 1024) == 0
    # Every face has positive uv area.
    tri = out.uvs[out.faces.astype(np.int64)].astype(np.float64)
    area2 = (tri[:, 1, 0] - tri[:, 0, 0]) * (tri[:, 2, 1] - tri[:, 0, 1]) - (
        tri[:, 1, 1] - tri[:, 0, 1]
    ) * (tri[:, 2, 0] - tri[:, 0, 0])
    assert (np.abs(area2) > 0).all()


def test_uv_atlas_packing_failure_reports_scale():
    # 6 cube charts cannot fit in an 8x8 atlas with 2-texel padding.
    with pytest.raises(DataError) as exc:
        generate_uv_atlas(cube_mesh(1.0), atlas_resolution=8, padding=2)
    assert "resolution" in str(exc.value)


def test_uv_atlas_folded_chart_splits_per_face():
    # A zig-zag strip whose faces share near-identical normals after averaging
    # but fold when projected: generator must still emit collision-free charts.
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0.05], [1, 1, -0.05], [0, 2, 0], [1, 2, 0]],
        np.float32,
    )
    faces = np.array([[0, 1, 2], [2, 1, 3], [2, 3, 4], [4, 3, 5]], np.int32)
    out = generate_uv_atlas(TexturedMesh(vertices=verts, faces=faces), atlas_resolution=256)
    assert out.n_faces == 4
    assert uv_ownership_collisions(out, 256) == 0
