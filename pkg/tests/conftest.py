import numpy as np
import pytest

from texrast.scene import Camera, TexturedMesh
from texrast.synth import MicroSpec, make_micro_scene, look_at_camera


@pytest.fixture()
def micro():
    return make_micro_scene(MicroSpec())


@pytest.fixture()
def micro_novq():
    return make_micro_scene(MicroSpec(with_vq=False))


def simple_camera(width=16, height=16, eye=(0.0, 0.0, -4.0), target=(0.0, 0.0, 0.0), fov=50.0):
    return look_at_camera(eye, target, fov_deg=fov, width=width, height=height)


def quad_mesh(z=0.0, half=1.0, uv_span=(0.0, 1.0)):
    """Camera-facing quad at depth z for a camera on -Z looking toward +Z."""
    lo, hi = uv_span
    verts = np.array(
        [[-half, -half, z], [half, -half, z], [half, half, z], [-half, half, z]],
        dtype=np.float32,
    )
    uvs = np.array([[lo, lo], [hi, lo], [hi, hi], [lo, hi]], dtype=np.float32)
    faces = np.array([[0, 2, 1], [0, 3, 2]], dtype=np.int32)
    return TexturedMesh(vertices=verts, faces=faces, uvs=uvs).validate()
