"""Scene directory serialization and Wavefront OBJ input.

Layout: `manifest.json` plus raw little-endian blobs (row-major, channel
innermost): float32 payloads, uint16 index maps, int32/int64 integer arrays.
Every blob is sha256-checksummed in the manifest; loading verifies sizes and
checksums and re-validates all type invariants, so no partially valid scene
can be constructed from disk.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .scene import (
    Camera,
    Codebook,
    Dense,
    FeatureAtlas,
    SceneConfig,
    SceneState,
    ShaderMLP,
    SkyboxStack,
    SkyLayer,
    TexturedMesh,
)
from .train import TrainConfig

SCENE_FORMAT = "texrast-scene"
SCENE_VERSION = "1.0.0"

_DTYPES = {
    "float32": "<f4",
    "float64": "<f8",
    "uint16": "<u2",
    "int32": "<i4",
    "int64": "<i8",
}


def _write_blob(root: Path, name: str, arr: np.ndarray) -> dict:
    dtype = str(arr.dtype)
    if dtype not in _DTYPES:
        raise DataError(f"unsupported blob dtype {dtype}", field=name)
    data = np.ascontiguousarray(arr).astype(_DTYPES[dtype], copy=False).tobytes()
    (root / name).write_bytes(data)
    return {
        "file": name,
        "dtype": dtype,
        "shape": list(arr.shape),
        "sha256": hashlib.sha256(data).hexdigest(),
    }


def _read_blob(root: Path, ref: dict, field: str) -> np.ndarray:
    path = root / ref["file"]
    if not path.exists():
        raise DataError(f"missing blob file {ref['file']}", field=field)
    data = path.read_bytes()
    dtype = np.dtype(_DTYPES[ref["dtype"]])
    expected = int(np.prod(ref["shape"])) * dtype.itemsize
    if len(data) != expected:
        raise DataError(
            f"blob {ref['file']} holds {len(data)} bytes, manifest shape "
            f"{ref['shape']} ({ref['dtype']}) needs {expected}",
            field=field,
        )
    if hashlib.sha256(data).hexdigest() != ref["sha256"]:
        raise DataError(f"checksum mismatch for blob {ref['file']}", field=field)
    return np.frombuffer(data, dtype=dtype).reshape(ref["shape"]).astype(ref["dtype"])


def _mlp_manifest(root: Path, prefix: str, mlp: ShaderMLP | None) -> dict | None:
    if mlp is None:
        return None

    def dense_ref(tag: str, d: Dense) -> dict:
        return {
            "weight": _write_blob(root, f"{prefix}_{tag}_w.f32", d.weight),
            "bias": _write_blob(root, f"{prefix}_{tag}_b.f32", d.bias),
            "activation": d.activation,
        }

    out: dict = {"kind": mlp.kind}
    out["layers"] = [dense_ref(f"layers{i}", d) for i, d in enumerate(mlp.layers)]
    out["trunk"] = [dense_ref(f"trunk{i}", d) for i, d in enumerate(mlp.trunk)]
    out["color"] = [dense_ref(f"color{i}", d) for i, d in enumerate(mlp.color_layers)]
    out["opacity"] = dense_ref("opacity", mlp.opacity_head) if mlp.opacity_head else None
    return out


def _mlp_from_manifest(root: Path, entry: dict | None, field: str) -> ShaderMLP | None:
    if entry is None:
        return None

    def dense(ref: dict, tag: str) -> Dense:
        return Dense(
            weight=_read_blob(root, ref["weight"], f"{field}.{tag}.weight"),
            bias=_read_blob(root, ref["bias"], f"{field}.{tag}.bias"),
            activation=ref["activation"],
        )

    return ShaderMLP(
        kind=entry["kind"],
        layers=[dense(r, f"layers{i}") for i, r in enumerate(entry["layers"])],
        trunk=[dense(r, f"trunk{i}") for i, r in enumerate(entry["trunk"])],
        color_layers=[dense(r, f"color{i}") for i, r in enumerate(entry["color"])],
        opacity_head=dense(entry["opacity"], "opacity") if entry["opacity"] else None,
    )


def save_scene(
    state: SceneState,
    path: str | Path,
    *,
    optimizer: dict | None = None,
    train_config: TrainConfig | None = None,
) -> None:
    """Write the scene (and optional optimizer state) so load_scene inverts it bitwise."""
    state.validate()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    manifest: dict = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "config": {
            "feature_dim": state.config.feature_dim,
            "codebook_size": state.config.codebook_size,
            "mlp_hidden": list(state.config.mlp_hidden),
            "shade_mode": state.config.shade_mode,
            "view_encoding": state.config.view_encoding,
        },
        "mesh": {
            "vertices": _write_blob(root, "mesh_vertices.f32", state.mesh.vertices),
            "uvs": _write_blob(root, "mesh_uvs.f32", state.mesh.uvs),
            "faces": _write_blob(root, "mesh_faces.i32", state.mesh.faces),
        },
        "atlas": {
            "data": _write_blob(root, "atlas_data.f32", state.atlas.data),
            "indices": (
                _write_blob(root, "atlas_indices.u16", state.atlas.indices)
                if state.atlas.indices is not None
                else None
            ),
        },
        "sky": [],
        "mlps": {
            "foreground": _mlp_manifest(root, "mlp_fg", state.mlp_fg),
            "background": _mlp_manifest(root, "mlp_bg", state.mlp_bg),
        },
        "codebooks": {},
    }
    for li, layer in enumerate(state.sky.layers):
        faces = []
        for fi, face in enumerate(layer.faces):
            faces.append(
                {
                    "data": _write_blob(root, f"sky_{li}_{fi}_data.f32", face.data),
                    "indices": (
                        _write_blob(root, f"sky_{li}_{fi}_indices.u16", face.indices)
                        if face.indices is not None
                        else None
                    ),
                }
            )
        manifest["sky"].append(
            {
                "center": [float(x) for x in layer.center],
                "half_extents": [float(x) for x in layer.half_extents],
                "faces": faces,
            }
        )
    for name, book in (("foreground", state.codebook_fg), ("sky", state.codebook_sky)):
        manifest["codebooks"][name] = (
            {
                "codes": _write_blob(root, f"codebook_{name}.f32", book.codes),
                "usage": _write_blob(root, f"codebook_{name}_usage.i64", book.usage),
            }
            if book is not None
            else None
        )
    training: dict = {}
    if train_config is not None:
        training["hyperparameters"] = dataclasses.asdict(train_config)
    if optimizer is not None:
        training["optimizer"] = {
            "step": optimizer["step"],
            "m": {k: _write_blob(root, f"optim_m_{k.replace('.', '_')}.f32", v)
                  for k, v in optimizer["m"].items()},
            "v": {k: _write_blob(root, f"optim_v_{k.replace('.', '_')}.f32", v)
                  for k, v in optimizer["v"].items()},
        }
    manifest["training"] = training
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_scene(path: str | Path) -> tuple[SceneState, dict]:
    """Load and validate a scene directory; returns (state, extras).

    extras holds "optimizer" (Adam state dict or None) and "train_config".
    """
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.exists():
        raise DataError(f"missing manifest.json in {root}", field="manifest")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != SCENE_FORMAT:
        raise DataError(f"not a scene directory: format={manifest.get('format')!r}", field="format")
    major = str(manifest.get("version", "")).split(".")[0]
    if major != SCENE_VERSION.split(".")[0]:
        raise DataError(f"unsupported scene version {manifest.get('version')}", field="version")

    cfgm = manifest["config"]
    config = SceneConfig(
        feature_dim=int(cfgm["feature_dim"]),
        codebook_size=int(cfgm["codebook_size"]),
        mlp_hidden=tuple(cfgm["mlp_hidden"]),
        shade_mode=cfgm["shade_mode"],
        view_encoding=cfgm["view_encoding"],
    )
    mesh = TexturedMesh(
        vertices=_read_blob(root, manifest["mesh"]["vertices"], "mesh.vertices"),
        faces=_read_blob(root, manifest["mesh"]["faces"], "mesh.faces"),
        uvs=_read_blob(root, manifest["mesh"]["uvs"], "mesh.uvs"),
    )
    books: dict[str, Codebook | None] = {}
    for name in ("foreground", "sky"):
        entry = manifest["codebooks"].get(name)
        books[name] = (
            Codebook(
                codes=_read_blob(root, entry["codes"], f"codebook_{name}.codes"),
                usage=_read_blob(root, entry["usage"], f"codebook_{name}.usage"),
            )
            if entry
            else None
        )

    def atlas_from(entry: dict, book: Codebook | None, field: str) -> FeatureAtlas:
        data = _read_blob(root, entry["data"], f"{field}.data")
        indices = None
        if entry.get("indices"):
            indices = _read_blob(root, entry["indices"], f"{field}.indices")
        return FeatureAtlas(data=data, indices=indices, codebook=book if indices is not None else None)

    atlas = atlas_from(manifest["atlas"], books["foreground"], "atlas")
    layers = []
    for li, lm in enumerate(manifest["sky"]):
        faces = [
            atlas_from(fm, books["sky"], f"sky.layer{li}.face{fi}")
            for fi, fm in enumerate(lm["faces"])
        ]
        layers.append(
            SkyLayer(
                center=np.array(lm["center"], dtype=np.float32),
                half_extents=np.array(lm["half_extents"], dtype=np.float32),
                faces=faces,
            )
        )
    state = SceneState(
        mesh=mesh,
        atlas=atlas,
        sky=SkyboxStack(layers=layers),
        mlp_fg=_mlp_from_manifest(root, manifest["mlps"]["foreground"], "mlp_fg"),
        mlp_bg=_mlp_from_manifest(root, manifest["mlps"]["background"], "mlp_bg"),
        codebook_fg=books["foreground"],
        codebook_sky=books["sky"],
        config=config,
    )
    state.validate()

    extras: dict = {"optimizer": None, "train_config": None}
    training = manifest.get("training") or {}
    if training.get("hyperparameters"):
        extras["train_config"] = TrainConfig(**training["hyperparameters"])
    if training.get("optimizer"):
        om = training["optimizer"]
        extras["optimizer"] = {
            "step": int(om["step"]),
            "m": {k: _read_blob(root, r, f"optimizer.m.{k}") for k, r in om["m"].items()},
            "v": {k: _read_blob(root, r, f"optimizer.v.{k}") for k, r in om["v"].items()},
        }
    return state, extras


# -- Wavefront OBJ subset --------------------------------------------------------

def load_obj(path: str | Path) -> TexturedMesh:
    """Read the v/vt/f OBJ subset. Polygons are fan-triangulated.

    Corners referencing different v and vt indices are split so the result
    keeps the 1:1 vertex/uv ownership the renderer expects.
    """
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    corners: list[list[tuple[int, int | None]]] = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            positions.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            texcoords.append([float(x) for x in parts[1:3]])
        elif tag == "f":
            face = []
            for tok in parts[1:]:
                fields = tok.split("/")
                vi = int(fields[0])
                ti = int(fields[1]) if len(fields) > 1 and fields[1] else None
                if vi < 0 or (ti is not None and ti < 0):
                    raise DataError(f"negative OBJ indices unsupported (line {ln})", field="obj")
                face.append((vi - 1, ti - 1 if ti is not None else None))
            if len(face) < 3:
                raise DataError(f"face with <3 corners (line {ln})", field="obj")
            corners.append(face)

    has_uv = bool(texcoords) and any(t is not None for f in corners for _, t in f)
    remap: dict[tuple[int, int | None], int] = {}
    out_pos: list[list[float]] = []
    out_uv: list[list[float]] = []

    def corner_index(vi: int, ti: int | None) -> int:
        key = (vi, ti if has_uv else None)
        if key not in remap:
            if vi >= len(positions):
                raise DataError(f"vertex index {vi + 1} out of range", field="obj")
            if has_uv:
                if ti is None:
                    raise DataError("mixed textured and untextured faces", field="obj")
                if ti >= len(texcoords):
                    raise DataError(f"uv index {ti + 1} out of range", field="obj")
                out_uv.append(texcoords[ti])
            remap[key] = len(out_pos)
            out_pos.append(positions[vi])
        return remap[key]

    faces = []
    for face in corners:
        ids = [corner_index(vi, ti) for vi, ti in face]
        for k in range(1, len(ids) - 1):
            faces.append([ids[0], ids[k], ids[k + 1]])

    mesh = TexturedMesh(
        vertices=np.array(out_pos, dtype=np.float32),
        faces=np.array(faces, dtype=np.int32) if faces else np.zeros((0, 3), np.int32),
        uvs=np.clip(np.array(out_uv, dtype=np.float32), 0.0, 1.0) if has_uv else None,
    )
    return mesh.validate()


def save_obj(mesh: TexturedMesh, path: str | Path) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    if mesh.uvs is not None:
        lines += [f"vt {u:.9g} {v:.9g}" for u, v in mesh.uvs]
        lines += [f"f {a + 1}/{a + 1} {b + 1}/{b + 1} {c + 1}/{c + 1}" for a, b, c in mesh.faces]
    else:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# -- views.json / pose files ------------------------------------------------------

def camera_from_json(entry: dict, field: str = "pose") -> Camera:
    m = np.array(entry["world_to_camera"], dtype=np.float64).reshape(4, 4)
    intr = entry["intrinsics"]
    cam = Camera(
        world_to_camera=m,
        fx=float(intr["fx"]),
        fy=float(intr["fy"]),
        cx=float(intr["cx"]),
        cy=float(intr["cy"]),
        width=int(entry["width"]),
        height=int(entry["height"]),
    )
    return cam.validate()


def camera_to_json(cam: Camera) -> dict:
    return {
        "world_to_camera": [float(x) for x in cam.world_to_camera.reshape(-1)],
        "intrinsics": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy},
        "width": cam.width,
        "height": cam.height,
    }


def load_views(path: str | Path) -> list:
    """Read a views.json file into TrainView objects (images loaded from disk)."""
    from .images import read_image
    from .train import TrainView

    root = Path(path).parent
    entries = json.loads(Path(path).read_text())
    views = []
    for i, entry in enumerate(entries):
        cam = camera_from_json(entry, field=f"views[{i}]")
        img = read_image(root / entry["image"])
        mask = None
        if entry.get("mask"):
            m = read_image(root / entry["mask"])
            mask = m[..., 0] > 0.5
        views.append(
            TrainView(camera=cam, image=img, mask=mask, name=entry.get("name", f"view{i}"))
        )
        views[-1].validate()
    return views
