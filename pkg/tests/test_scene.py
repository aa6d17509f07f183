"""Domain-type invariants and scene serialization round-trips."""

import json
from pathlib import Path

import numpy as np
import pytest

from texrast.errors import DataError, ValidationError
from texrast.scene import (
    Camera,
    Codebook,
    FeatureAtlas,
    SceneConfig,
    SceneState,
    ShaderMLP,
    SkyboxStack,
    SkyLayer,
    TexturedMesh,
    face_uv_from_unit,
)
from texrast.scene_io import load_obj, load_scene, save_obj, save_scene
from texrast.synth import MicroSpec, make_micro_scene


def scene_equal(a: SceneState, b: SceneState) -> bool:
    if not (
        np.array_equal(a.mesh.vertices, b.mesh.vertices)
        and np.array_equal(a.mesh.faces, b.mesh.faces)
        and np.array_equal(a.mesh.uvs, b.mesh.uvs)
        and np.array_equal(a.atlas.data, b.atlas.data)
    ):
        return False
    if (a.atlas.indices is None) != (b.atlas.indices is None):
        return False
    if a.atlas.indices is not None and not np.array_equal(a.atlas.indices, b.atlas.indices):
        return False
    if len(a.sky) != len(b.sky):
        return False
    for la, lb in zip(a.sky.layers, b.sky.layers):
        if not (
            np.array_equal(la.center, lb.center)
            and np.array_equal(la.half_extents, lb.half_extents)
        ):
            return False
        for fa, fb in zip(la.faces, lb.faces):
            if not np.array_equal(fa.data, fb.data):
                return False
            if (fa.indices is None) != (fb.indices is None):
                return False
            if fa.indices is not None and not np.array_equal(fa.indices, fb.indices):
                return False
    for ma, mb in ((a.mlp_fg, b.mlp_fg), (a.mlp_bg, b.mlp_bg)):
        if (ma is None) != (mb is None):
            return False
        if ma is not None:
            for (na, va), (nb, vb) in zip(ma.named_arrays(), mb.named_arrays()):
                if na != nb or not np.array_equal(va, vb):
                    return False
    for ba, bb in ((a.codebook_fg, b.codebook_fg), (a.codebook_sky, b.codebook_sky)):
        if (ba is None) != (bb is None):
            return False
        if ba is not None and not (
            np.array_equal(ba.codes, bb.codes) and np.array_equal(ba.usage, bb.usage)
        ):
            return False
    return True


def test_roundtrip_micro_scene_bitwise(tmp_path, micro):
    state, _ = micro
    save_scene(state, tmp_path / "scene")
    loaded, extras = load_scene(tmp_path / "scene")
    assert scene_equal(state, loaded)
    assert extras["optimizer"] is None


def test_roundtrip_empty_skybox_and_one_texel_atlas(tmp_path):
    mesh = TexturedMesh(
        vertices=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.float32),
        faces=np.array([[0, 1, 2]], np.int32),
        uvs=np.array([[0, 0], [1, 0], [0, 1]], np.float32),
    )
    state = SceneState(
        mesh=mesh,
        atlas=FeatureAtlas(data=np.ones((1, 1, 4), np.float32)),
        sky=SkyboxStack(layers=[]),
        mlp_fg=ShaderMLP.foreground(4, (8,), rng=np.random.default_rng(0)),
        mlp_bg=None,
        codebook_fg=None,
        codebook_sky=None,
        config=SceneConfig(feature_dim=4, mlp_hidden=(8,)),
    ).validate()
    save_scene(state, tmp_path / "s")
    loaded, _ = load_scene(tmp_path / "s")
    assert scene_equal(state, loaded)
    assert len(loaded.sky) == 0


def test_blob_size_mismatch_names_the_atlas(tmp_path, micro):
    state, _ = micro
    save_scene(state, tmp_path / "scene")
    manifest = json.loads((tmp_path / "scene" / "manifest.json").read_text())
    # Claim D=12 while the blob holds D=4 payloads.
    manifest["atlas"]["data"]["shape"][2] = 12
    manifest["config"]["feature_dim"] = 12
    (tmp_path / "scene" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataError) as exc:
        load_scene(tmp_path / "scene")
    assert "atlas" in str(exc.value)


def test_checksum_mismatch_detected(tmp_path, micro):
    state, _ = micro
    save_scene(state, tmp_path / "scene")
    blob = tmp_path / "scene" / "atlas_data.f32"
    raw = bytearray(blob.read_bytes())
    raw[0] ^= 0xFF
    blob.write_bytes(bytes(raw))
    with pytest.raises(DataError) as exc:
        load_scene(tmp_path / "scene")
    assert "checksum" in str(exc.value)


def test_missing_blob_reports_file(tmp_path, micro):
    state, _ = micro
    save_scene(state, tmp_path / "scene")
    (tmp_path / "scene" / "mesh_vertices.f32").unlink()
    with pytest.raises(DataError) as exc:
        load_scene(tmp_path / "scene")
    assert "mesh_vertices" in str(exc.value)


def test_invariant_violations_name_fields():
    with pytest.raises(ValidationError) as exc:
        TexturedMesh(
            vertices=np.zeros((2, 3), np.float32),
            faces=np.array([[0, 1, 5]], np.int32),
        ).validate()
    assert "mesh.faces" in str(exc.value)

    with pytest.raises(ValidationError):
        TexturedMesh(
            vertices=np.zeros((3, 3), np.float32),
            faces=np.array([[0, 1, 1]], np.int32),
        ).validate()

    with pytest.raises(ValidationError) as exc:
        TexturedMesh(
            vertices=np.zeros((3, 3), np.float32),
            faces=np.array([[0, 1, 2]], np.int32),
            uvs=np.array([[0, 0], [2.0, 0], [0, 1]], np.float32),
        ).validate()
    assert "uv" in str(exc.value)

    with pytest.raises(ValidationError):
        Camera(np.eye(4), fx=-1.0, fy=1.0, cx=0, cy=0, width=4, height=4).validate()
    with pytest.raises(ValidationError):
        Codebook(codes=np.zeros((0, 3), np.float32)).validate()


def test_skybox_nesting_enforced():
    def layer(extent):
        faces = [FeatureAtlas(data=np.zeros((2, 2, 3), np.float32)) for _ in range(6)]
        return SkyLayer(
            center=np.zeros(3, np.float32),
            half_extents=np.full(3, extent, np.float32),
            faces=faces,
        )

    SkyboxStack(layers=[layer(1.0), layer(2.0)]).validate()
    with pytest.raises(ValidationError):
        SkyboxStack(layers=[layer(2.0), layer(1.0)]).validate()
    with pytest.raises(ValidationError):
        SkyboxStack(layers=[layer(1.0), layer(1.0)]).validate()  # must be strict


def test_shader_mlp_chain_validation():
    mlp = ShaderMLP.foreground(4, (8, 8), rng=np.random.default_rng(0))
    mlp.validate()
    mlp.layers[1].weight = np.zeros((5, 8), np.float32)  # break the chain
    with pytest.raises(ValidationError):
        mlp.validate()


def test_quantized_atlas_invariants(micro):
    state, _ = micro
    atlas = state.atlas
    assert atlas.quantized
    deq = atlas.effective()
    assert np.array_equal(deq, state.codebook_fg.codes[atlas.indices.astype(np.int64)])
    # index out of range must fail validation
    atlas.indices[0, 0] = state.codebook_fg.size
    with pytest.raises(ValidationError):
        atlas.validate()


def test_face_uv_round_trip():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(200, 3))
    q /= np.abs(q).max(axis=1, keepdims=True)  # on the unit cube surface
    face, u, v = face_uv_from_unit(q)
    assert ((0 <= u) & (u <= 1)).all() and ((0 <= v) & (v <= 1)).all()
    # Dominant-axis faces agree with component signs.
    axis = np.abs(q).argmax(axis=1)
    sign = np.take_along_axis(q, axis[:, None], 1)[:, 0] >= 0
    assert np.array_equal(face, axis * 2 + np.where(sign, 0, 1))


def test_obj_round_trip(tmp_path):
    mesh = TexturedMesh(
        vertices=np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], np.float32),
        faces=np.array([[0, 1, 2], [1, 3, 2]], np.int32),
        uvs=np.array([[0, 0], [1, 0], [0, 1], [1, 1]], np.float32),
    ).validate()
    save_obj(mesh, tmp_path / "m.obj")
    loaded = load_obj(tmp_path / "m.obj")
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.uvs, mesh.uvs)
    assert np.array_equal(loaded.faces, mesh.faces)


def test_obj_mismatched_vt_indices_are_split(tmp_path):
    # Two faces share position 1 but reference different uvs for it.
    obj = """
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
vt 0.5 0.5
f 1/1 2/2 3/3
f 1/1 2/4 3/3
"""
    p = tmp_path / "m.obj"
    p.write_text(obj)
    mesh = load_obj(p)
    assert mesh.n_vertices == 4  # vertex 2 duplicated for uv 4
    assert mesh.n_faces == 2
    mesh.validate()


def test_obj_quads_are_triangulated(tmp_path):
    obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
    p = tmp_path / "q.obj"
    p.write_text(obj)
    mesh = load_obj(p)
    assert mesh.n_faces == 2
    assert mesh.uvs is None


def test_scene_version_refusal(tmp_path, micro):
    state, _ = micro
    save_scene(state, tmp_path / "scene")
    manifest = json.loads((tmp_path / "scene" / "manifest.json").read_text())
    manifest["version"] = "2.0.0"
    (tmp_path / "scene" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataError) as exc:
        load_scene(tmp_path / "scene")
    assert "version" in str(exc.value)
