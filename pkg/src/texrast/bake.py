"""Bake a trained scene into a self-contained real-time bundle.

The bundle holds packed quantized textures (u16 index maps + codebooks, or raw
float pages when unquantized), interleaved mesh buffers, generated GLSL ES
3.00 fragment shaders with the MLP weights inlined as constant arrays, and a
back-to-front draw list. `emulate_bundle` is the host-side oracle: it executes
the draw list and shader semantics (not the shader text) on the CPU.
"""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from . import shading
from .backend import kernels
from .errors import DataError
from .raster import geometry_pass, sample_atlas
from .scene import FACE_AXES, FACE_NAMES, Camera, SceneState, ShaderMLP

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "texrast-bundle"
BUNDLE_VERSION = "1.0.0"
GLSL_VERSION = "300 es"


def _fmt(x: float) -> str:
    """Format a float32 so text -> float parsing reproduces it exactly."""
    return format(float(np.float32(x)), ".9g")


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write(root: Path, name: str, data: bytes) -> dict:
    (root / name).write_bytes(data)
    return {"file": name, "bytes": len(data), "sha256": _sha(data)}


def _dense_json(mlp: ShaderMLP | None) -> dict | None:
    if mlp is None:
        return None

    def dump(d):
        return {
            "weight": [[float(x) for x in row] for row in d.weight],
            "bias": [float(x) for x in d.bias],
            "activation": d.activation,
        }

    return {
        "kind": mlp.kind,
        "layers": [dump(d) for d in mlp.layers],
        "trunk": [dump(d) for d in mlp.trunk],
        "opacity": dump(mlp.opacity_head) if mlp.opacity_head else None,
        "color": [dump(d) for d in mlp.color_layers],
    }


def _tuples_from_json(entries) -> list:
    return [
        (
            np.array(e["weight"], dtype=np.float32),
            np.array(e["bias"], dtype=np.float32),
            e["activation"],
        )
        for e in entries
    ]


# -- GLSL generation ------------------------------------------------------------

def _const_array(name: str, arr: np.ndarray) -> str:
    flat = np.asarray(arr, dtype=np.float32).reshape(-1)
    vals = ", ".join(_fmt(x) for x in flat)
    return f"const float {name}[{flat.size}] = float[{flat.size}]({vals});"


def _emit_dense(src: list[str], tag: str, d, in_n: int):
    """Emit one affine layer as const arrays plus an evaluation loop."""
    w = np.asarray(d["weight"] if isinstance(d, dict) else d.weight, dtype=np.float32)
    b = np.asarray(d["bias"] if isinstance(d, dict) else d.bias, dtype=np.float32)
    act = d["activation"] if isinstance(d, dict) else d.activation
    out_n = w.shape[1]
    src.append(_const_array(f"W{tag}", w))
    src.append(_const_array(f"B{tag}", b))
    body = {
        "relu": "acc = max(acc, 0.0);",
        "sigmoid": "acc = 1.0 / (1.0 + exp(-acc));",
        "linear": "",
    }[act]
    src.append(
        f"""void layer{tag}(in float xin[{in_n}], out float xout[{out_n}]) {{
  for (int j = 0; j < {out_n}; ++j) {{
    float acc = B{tag}[j];
    for (int i = 0; i < {in_n}; ++i) acc += xin[i] * W{tag}[i * {out_n} + j];
    {body}
    xout[j] = acc;
  }}
}}"""
    )
    return out_n


def _emit_sampler(src: list[str], dim: int, v_res: int, u_res: int, quantized: bool):
    pages = (dim + 3) // 4
    if quantized:
        src.append("uniform highp usampler2D u_index;")
        src.append("uniform highp sampler2D u_codebook;")
        fetch = [f"void fetch_texel(ivec2 t, out float f[{dim}]) {{",
                 "  int k = int(texelFetch(u_index, t, 0).r);"]
        for p in range(pages):
            fetch.append(f"  vec4 row{p} = texelFetch(u_codebook, ivec2({p}, k), 0);")
            for c in range(4):
                d = p * 4 + c
                if d < dim:
                    fetch.append(f"  f[{d}] = row{p}[{c}];")
        fetch.append("}")
        src.append("\n".join(fetch))
    else:
        for p in range(pages):
            src.append(f"uniform highp sampler2D u_page{p};")
        fetch = [f"void fetch_texel(ivec2 t, out float f[{dim}]) {{"]
        for p in range(pages):
            fetch.append(f"  vec4 row{p} = texelFetch(u_page{p}, t, 0);")
            for c in range(4):
                d = p * 4 + c
                if d < dim:
                    fetch.append(f"  f[{d}] = row{p}[{c}];")
        fetch.append("}")
        src.append("\n".join(fetch))
    src.append(
        f"""void sample_feature(vec2 uv, out float f[{dim}]) {{
  vec2 st = uv * vec2({float(u_res):.1f}, {float(v_res):.1f}) - 0.5;
  vec2 fl = floor(st);
  vec2 fr = st - fl;
  int x0 = clamp(int(fl.x), 0, {u_res - 1});
  int x1 = clamp(int(fl.x) + 1, 0, {u_res - 1});
  int y0 = clamp(int(fl.y), 0, {v_res - 1});
  int y1 = clamp(int(fl.y) + 1, 0, {v_res - 1});
  float t00[{dim}]; fetch_texel(ivec2(x0, y0), t00);
  float t10[{dim}]; fetch_texel(ivec2(x1, y0), t10);
  float t01[{dim}]; fetch_texel(ivec2(x0, y1), t01);
  float t11[{dim}]; fetch_texel(ivec2(x1, y1), t11);
  float w00 = (1.0 - fr.x) * (1.0 - fr.y);
  float w10 = fr.x * (1.0 - fr.y);
  float w01 = (1.0 - fr.x) * fr.y;
  float w11 = fr.x * fr.y;
  for (int d = 0; d < {dim}; ++d)
    f[d] = w00 * t00[d] + w10 * t10[d] + w01 * t01[d] + w11 * t11[d];
}}"""
    )


def _emit_dir_encoding(src: list[str], mode: str) -> int:
    if mode == "raw":
        src.append(
            "void encode_dir(vec3 d, out float e[3]) { e[0] = d.x; e[1] = d.y; e[2] = d.z; }"
        )
        return 3
    lines = ["void encode_dir(vec3 d, out float e[15]) {",
             "  e[0] = d.x; e[1] = d.y; e[2] = d.z;"]
    i = 3
    for k in (1.0, 2.0):
        for fn in ("sin", "cos"):
            for comp in ("x", "y", "z"):
                lines.append(f"  e[{i}] = {fn}({_fmt(np.pi * k)} * d.{comp});")
                i += 1
    lines.append("}")
    src.append("\n".join(lines))
    return 15


def generate_foreground_shader(state: SceneState, quantized: bool) -> str:
    d = state.feature_dim
    src = [
        f"#version {GLSL_VERSION}",
        "precision highp float;",
        "precision highp int;",
        "in vec2 v_uv;",
        "in vec3 v_world_pos;",
        "uniform vec3 u_cam_pos;",
        "out vec4 frag_color;",
    ]
    _emit_sampler(src, d, state.atlas.height, state.atlas.width, quantized)
    main = [
        "void main() {",
        f"  float feat[{d}];",
        "  sample_feature(v_uv, feat);",
    ]
    if state.config.shade_mode == "flat":
        main += [
            "  vec3 c = vec3(feat[0], feat[1], feat[2]);",
            "  c = 1.0 / (1.0 + exp(-c));",
            "  frag_color = vec4(c, 1.0);",
            "}",
        ]
        src.append("\n".join(main))
        return "\n".join(src) + "\n"

    enc_n = _emit_dir_encoding(src, state.config.view_encoding)
    widths = [d + enc_n]
    for i, dense in enumerate(state.mlp_fg.layers):
        widths.append(_emit_dense(src, f"F{i}", dense, widths[-1]))
    main += [
        "  vec3 dir = normalize(v_world_pos - u_cam_pos);",
        f"  float e[{enc_n}];",
        "  encode_dir(dir, e);",
        f"  float a0[{widths[0]}];",
        f"  for (int i = 0; i < {d}; ++i) a0[i] = feat[i];",
        f"  for (int i = 0; i < {enc_n}; ++i) a0[{d} + i] = e[i];",
    ]
    for i in range(len(state.mlp_fg.layers)):
        main.append(f"  float a{i + 1}[{widths[i + 1]}];")
        main.append(f"  layerF{i}(a{i}, a{i + 1});")
    last = len(state.mlp_fg.layers)
    main += [
        f"  frag_color = vec4(a{last}[0], a{last}[1], a{last}[2], 1.0);",
        "}",
    ]
    src.append("\n".join(main))
    return "\n".join(src) + "\n"


def _emit_face_uv(src: list[str]):
    lines = ["vec2 face_uv(vec3 q, int face) {", "  float s = 0.0; float t = 0.0;"]
    comp = "xyz"
    for f, (_, _, s_axis, s_sign, t_axis, t_sign) in enumerate(FACE_AXES):
        kw = "if" if f == 0 else "else if"
        lines.append(
            f"  {kw} (face == {f}) {{ s = {'-' if s_sign < 0 else ''}q.{comp[s_axis]};"
            f" t = {'-' if t_sign < 0 else ''}q.{comp[t_axis]}; }}"
        )
    lines.append("  return vec2((s + 1.0) * 0.5, (t + 1.0) * 0.5);")
    lines.append("}")
    src.append("\n".join(lines))


def generate_sky_shader(state: SceneState, quantized: bool) -> str:
    d = state.feature_dim
    res = state.sky.layers[0].faces[0].height if len(state.sky) else 1
    src = [
        f"#version {GLSL_VERSION}",
        "precision highp float;",
        "precision highp int;",
        "in vec3 v_world_pos;",
        "uniform vec3 u_cam_pos;",
        "uniform vec3 u_center;",
        "uniform vec3 u_half;",
        "uniform int u_face;",
        "uniform bool u_force_opaque;",
        "out vec4 frag_color;",
    ]
    _emit_face_uv(src)
    _emit_sampler(src, d, res, res, quantized)
    main = [
        "void main() {",
        "  vec3 q = (v_world_pos - u_center) / u_half;",
        "  vec2 uv = face_uv(q, u_face);",
        f"  float feat[{d}];",
        "  sample_feature(uv, feat);",
    ]
    if state.config.shade_mode == "flat":
        main += [
            "  vec3 c = vec3(feat[0], feat[1], feat[2]);",
            "  c = 1.0 / (1.0 + exp(-c));",
            "  float alpha = 1.0 / (1.0 + exp(-feat[3]));",
            "  if (u_force_opaque) alpha = 1.0;",
            "  frag_color = vec4(c, alpha);",
            "}",
        ]
        src.append("\n".join(main))
        return "\n".join(src) + "\n"

    enc_n = _emit_dir_encoding(src, state.config.view_encoding)
    mlp = state.mlp_bg
    widths = [d]
    for i, dense in enumerate(mlp.trunk):
        widths.append(_emit_dense(src, f"T{i}", dense, widths[-1]))
    hid = widths[-1]
    _emit_dense(src, "O", mlp.opacity_head, hid)
    cw = [hid + enc_n]
    for i, dense in enumerate(mlp.color_layers):
        cw.append(_emit_dense(src, f"C{i}", dense, cw[-1]))
    main += [f"  float t0[{d}];", f"  for (int i = 0; i < {d}; ++i) t0[i] = feat[i];"]
    for i in range(len(mlp.trunk)):
        main.append(f"  float t{i + 1}[{widths[i + 1]}];")
        main.append(f"  layerT{i}(t{i}, t{i + 1});")
    ht = len(mlp.trunk)
    main += [
        "  float op[1];",
        f"  layerO(t{ht}, op);",
        "  vec3 dir = normalize(v_world_pos - u_cam_pos);",
        f"  float e[{enc_n}];",
        "  encode_dir(dir, e);",
        f"  float c0[{cw[0]}];",
        f"  for (int i = 0; i < {hid}; ++i) c0[i] = t{ht}[i];",
        f"  for (int i = 0; i < {enc_n}; ++i) c0[{hid} + i] = e[i];",
    ]
    for i in range(len(mlp.color_layers)):
        main.append(f"  float c{i + 1}[{cw[i + 1]}];")
        main.append(f"  layerC{i}(c{i}, c{i + 1});")
    hc = len(mlp.color_layers)
    main += [
        "  float alpha = u_force_opaque ? 1.0 : op[0];",
        f"  frag_color = vec4(c{hc}[0], c{hc}[1], c{hc}[2], alpha);",
        "}",
    ]
    src.append("\n".join(main))
    return "\n".join(src) + "\n"


# -- bundle writing ----------------------------------------------------------------

def _paged_texture(root: Path, stem: str, arr: np.ndarray, limit: int) -> list[dict]:
    """Write a (V, U[, D]) texture, splitting rows into pages above `limit`."""
    v = arr.shape[0]
    if arr.shape[1] > limit:
        raise DataError(f"texture width {arr.shape[1]} exceeds limit {limit}", field=stem)
    suffix = ".idx" if arr.dtype == np.uint16 else ".f32"
    pages = []
    if v <= limit:
        ranges = [(0, v)]
        names = [f"{stem}{suffix}"]
    else:
        ranges = [(r, min(r + limit, v)) for r in range(0, v, limit)]
        names = [f"{stem}_p{k}{suffix}" for k in range(len(ranges))]
        log.warning("texture %s exceeds %d rows; split into %d pages", stem, limit, len(ranges))
    for name, (r0, r1) in zip(names, ranges):
        ref = _write(root, name, np.ascontiguousarray(arr[r0:r1]).tobytes())
        ref["rows"] = [r0, r1]
        pages.append(ref)
    return pages


def bake(
    state: SceneState,
    out_dir: str | Path,
    *,
    quantize: bool = True,
    texture_limit: int = 8192,
) -> dict:
    """Export the scene as a real-time bundle; returns the manifest dict."""
    state.validate()
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    quantized = quantize and state.atlas.quantized
    if quantize and not quantized:
        log.warning("scene has no quantized atlases; baking full float textures")

    n = state.mesh.n_vertices
    inter = np.empty((n, 5), dtype=np.float32)
    inter[:, :3] = state.mesh.vertices
    inter[:, 3:] = state.mesh.uvs
    mesh_bytes = inter.tobytes() + state.mesh.faces.astype(np.uint32).tobytes()
    mesh_ref = _write(root, "mesh.bin", mesh_bytes)
    mesh_ref.update(
        {"vertex_count": n, "face_count": state.mesh.n_faces, "index_offset": n * 20}
    )

    d = state.feature_dim
    manifest: dict = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "glsl": GLSL_VERSION,
        "feature_dim": d,
        "quantized": bool(quantized),
        "shade_mode": state.config.shade_mode,
        "view_encoding": state.config.view_encoding,
        "texture_size_limit": texture_limit,
        "camera_convention": "opencv: world_to_camera row-major 4x4, x right, y down, z forward",
        "mesh": mesh_ref,
    }

    if quantized:
        manifest["atlas"] = {
            "height": state.atlas.height,
            "width": state.atlas.width,
            "pages": _paged_texture(root, "atlas_fg", state.atlas.indices, texture_limit),
        }
        manifest["codebooks"] = {
            "foreground": {
                "rows": state.codebook_fg.size,
                **_write(root, "codebook_fg.f32", state.codebook_fg.codes.tobytes()),
            },
            "sky": (
                {
                    "rows": state.codebook_sky.size,
                    **_write(root, "codebook_sky.f32", state.codebook_sky.codes.tobytes()),
                }
                if state.codebook_sky is not None
                else None
            ),
        }
    else:
        manifest["atlas"] = {
            "height": state.atlas.height,
            "width": state.atlas.width,
            "pages": _paged_texture(root, "atlas_fg", state.atlas.effective(), texture_limit),
        }
        manifest["codebooks"] = {"foreground": None, "sky": None}

    layers = []
    for li, layer in enumerate(state.sky.layers):
        faces = []
        for fi, face in enumerate(layer.faces):
            stem = f"sky_{li + 1}_{FACE_NAMES[fi]}"
            tex = face.indices if quantized else face.effective()
            faces.append({"pages": _paged_texture(root, stem, tex, texture_limit)})
        layers.append(
            {
                "center": [float(x) for x in layer.center],
                "half_extents": [float(x) for x in layer.half_extents],
                "face_resolution": layer.faces[0].height,
                "faces": faces,
            }
        )
    manifest["sky_layers"] = layers

    draw_list: list[dict] = []
    for li in range(len(state.sky) - 1, -1, -1):
        draw_list.append(
            {"kind": "sky", "layer": li, "force_opaque": li == len(state.sky) - 1}
        )
    draw_list.append({"kind": "mesh"})
    manifest["draw_list"] = draw_list

    fg_src = generate_foreground_shader(state, quantized)
    manifest["shaders"] = {"foreground": _write(root, "shade_fg.frag", fg_src.encode())}
    if len(state.sky):
        sky_src = generate_sky_shader(state, quantized)
        manifest["shaders"]["sky"] = _write(root, "shade_sky.frag", sky_src.encode())
    manifest["mlp"] = {
        "foreground": _dense_json(state.mlp_fg) if state.config.shade_mode == "mlp" else None,
        "background": _dense_json(state.mlp_bg) if state.config.shade_mode == "mlp" else None,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def bundle_total_bytes(bundle_dir: str | Path) -> int:
    return sum(p.stat().st_size for p in Path(bundle_dir).iterdir() if p.is_file())


# -- bundle loading + CPU emulation ---------------------------------------------------

def _read_checked(root: Path, ref: dict, field: str) -> bytes:
    path = root / ref["file"]
    if not path.exists():
        raise DataError(f"missing bundle blob {ref['file']}", field=field)
    data = path.read_bytes()
    if _sha(data) != ref["sha256"]:
        raise DataError(f"checksum mismatch for bundle blob {ref['file']}", field=field)
    return data


def _load_pages(root: Path, pages: list[dict], shape_tail: tuple, dtype, field: str) -> np.ndarray:
    parts = []
    for ref in pages:
        rows = ref["rows"][1] - ref["rows"][0]
        data = _read_checked(root, ref, field)
        parts.append(np.frombuffer(data, dtype=dtype).reshape(rows, *shape_tail))
    return np.concatenate(parts, axis=0) if len(parts) > 1 else parts[0].copy()


class LoadedBundle:
    """Decoded bundle: textures dequantized lazily, weights from the manifest."""

    def __init__(self, bundle_dir: str | Path):
        root = Path(bundle_dir)
        mpath = root / "manifest.json"
        if not mpath.exists():
            raise DataError(f"missing manifest.json in {root}", field="manifest")
        manifest = json.loads(mpath.read_text())
        if manifest.get("format") != BUNDLE_FORMAT:
            raise DataError(
                f"not a bundle: format={manifest.get('format')!r}", field="format"
            )
        major = str(manifest.get("version", "")).split(".")[0]
        if major != BUNDLE_VERSION.split(".")[0]:
            raise DataError(
                f"unsupported bundle version {manifest.get('version')}", field="version"
            )
        self.manifest = manifest
        self.root = root
        d = manifest["feature_dim"]
        self.feature_dim = d
        self.quantized = manifest["quantized"]

        mesh_ref = manifest["mesh"]
        raw = _read_checked(root, mesh_ref, "mesh")
        n = mesh_ref["vertex_count"]
        inter = np.frombuffer(raw[: n * 20], dtype=np.float32).reshape(n, 5)
        self.vertices = inter[:, :3].copy()
        self.uvs = inter[:, 3:].copy()
        self.faces = (
            np.frombuffer(raw[n * 20 :], dtype=np.uint32)
            .reshape(mesh_ref["face_count"], 3)
            .astype(np.int32)
        )

        books = {}
        for name in ("foreground", "sky"):
            ref = manifest["codebooks"].get(name)
            books[name] = (
                np.frombuffer(_read_checked(root, ref, f"codebook_{name}"), np.float32)
                .reshape(ref["rows"], d)
                if ref
                else None
            )
        self.codebooks = books

        am = manifest["atlas"]
        if self.quantized:
            idx = _load_pages(root, am["pages"], (am["width"],), np.uint16, "atlas")
            self.atlas = books["foreground"][idx.astype(np.int64)]
        else:
            self.atlas = _load_pages(root, am["pages"], (am["width"], d), np.float32, "atlas")

        self.sky_layers = []
        for li, lm in enumerate(manifest["sky_layers"]):
            res = lm["face_resolution"]
            faces = []
            for fi, fm in enumerate(lm["faces"]):
                if self.quantized:
                    idx = _load_pages(root, fm["pages"], (res,), np.uint16, f"sky{li}")
                    faces.append(books["sky"][idx.astype(np.int64)])
                else:
                    faces.append(_load_pages(root, fm["pages"], (res, d), np.float32, f"sky{li}"))
            self.sky_layers.append(
                {
                    "center": np.array(lm["center"], dtype=np.float64),
                    "half_extents": np.array(lm["half_extents"], dtype=np.float64),
                    "faces": faces,
                }
            )

        self.shade_mode = manifest["shade_mode"]
        self.view_encoding = manifest["view_encoding"]
        if self.shade_mode == "mlp":
            fg = manifest["mlp"]["foreground"]
            self.fg_layers = _tuples_from_json(fg["layers"])
            bg = manifest["mlp"]["background"]
            if bg is not None:
                self.bg_trunk = _tuples_from_json(bg["trunk"])
                self.bg_opacity = _tuples_from_json([bg["opacity"]])[0]
                self.bg_color = _tuples_from_json(bg["color"])


def over_composite(colors: list[np.ndarray], opacities: list[np.ndarray]) -> np.ndarray:
    """Back-to-front over-compositing: iterate far -> near, dst = src*a + dst*(1-a)."""
    dst = np.zeros_like(colors[0])
    for color, alpha in zip(colors, opacities):
        dst = color * alpha[..., None] + dst * (1.0 - alpha[..., None])
    return dst


def emulate_bundle(bundle: LoadedBundle | str | Path, cam: Camera) -> np.ndarray:
    """CPU interpreter for the baked draw list; the GPU viewer's correctness oracle."""
    if not isinstance(bundle, LoadedBundle):
        bundle = LoadedBundle(bundle)
    h, w = cam.height, cam.width
    npx = h * w
    dirs64 = cam.pixel_directions().reshape(-1, 3)
    dirs = dirs64.astype(np.float32)
    enc = shading.encode_dirs(dirs, bundle.view_encoding)
    dst = np.zeros((npx, 3), dtype=np.float32)

    for entry in bundle.manifest["draw_list"]:
        if entry["kind"] == "sky":
            layer = bundle.sky_layers[entry["layer"]]
            origin = cam.origin()
            face = np.empty(npx, dtype=np.int32)
            us = np.empty(npx)
            vs = np.empty(npx)
            kernels.sky_exit_uv(
                np.ascontiguousarray(origin),
                np.ascontiguousarray(dirs64),
                layer["center"], layer["half_extents"], face, us, vs,
            )
            feats = np.zeros((npx, bundle.feature_dim), dtype=np.float32)
            for f in range(6):
                m = np.nonzero(face == f)[0]
                if not len(m):
                    continue
                vals, _, _ = sample_atlas(layer["faces"][f], us[m], vs[m])
                feats[m] = vals
            if bundle.shade_mode == "mlp":
                opacity, color, _ = shading.bg_forward(
                    bundle.bg_trunk, bundle.bg_opacity, bundle.bg_color, feats, enc
                )
            else:
                opacity, color = shading.flat_bg_forward(feats)
            if entry.get("force_opaque"):
                opacity = np.ones(npx, dtype=np.float32)
            dst = color * opacity[:, None] + dst * (1.0 - opacity[:, None])
        elif entry["kind"] == "mesh":
            from .scene import TexturedMesh

            mesh = TexturedMesh(vertices=bundle.vertices, faces=bundle.faces, uvs=bundle.uvs)
            tri, _, u, v = geometry_pass(mesh, cam)
            pix = np.nonzero(tri.reshape(-1) >= 0)[0]
            if len(pix):
                feats, _, _ = sample_atlas(
                    bundle.atlas, u.reshape(-1)[pix], v.reshape(-1)[pix]
                )
                if bundle.shade_mode == "mlp":
                    color, _ = shading.fg_forward(bundle.fg_layers, feats, enc[pix])
                else:
                    color = shading.flat_fg_forward(feats)
                dst[pix] = color  # opaque: alpha = 1 over
    return dst.reshape(h, w, 3)
