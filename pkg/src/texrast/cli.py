"""Command-line surface: prep | train | render | bake | eval | info | synth."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, TexrastError


def _json_safe(obj):
    if isinstance(obj, float):
        if np.isposinf(obj):
            return "inf"
        if np.isneginf(obj):
            return "-inf"
        if np.isnan(obj):
            return "nan"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _emit(payload: dict, as_json: bool, human: str | None = None):
    if as_json:
        print(json.dumps(_json_safe(payload), indent=1))
    elif human is not None:
        print(human)


# -- prep --------------------------------------------------------------------------

def cmd_prep(args) -> int:
    from .meshpipe import DecimationConfig, cluster_vertices, cull_invisible, decimate, generate_uv_atlas
    from .scene import Codebook, FeatureAtlas, SceneConfig, SceneState, ShaderMLP, SkyboxStack, SkyLayer
    from .scene_io import camera_from_json, load_obj, save_scene

    mesh = load_obj(args.infile)
    cameras = [camera_from_json(e, f"cameras[{i}]")
               for i, e in enumerate(json.loads(Path(args.cameras).read_text()))]
    mesh = cluster_vertices(mesh, args.cell)
    mesh = decimate(mesh, DecimationConfig(
        target_vertices=args.target_verts, cell_size=args.cell,
        boundary_weight=args.boundary_weight))
    if not args.no_cull:
        mesh = cull_invisible(mesh, cameras)
    mesh = generate_uv_atlas(mesh, atlas_resolution=args.atlas_res)

    rng = np.random.default_rng([args.seed, 3])
    d = args.feature_dim
    atlas = FeatureAtlas(
        data=rng.normal(0.0, 0.1, size=(args.atlas_res, args.atlas_res, d)).astype(np.float32))
    cam_pos = np.stack([c.origin() for c in cameras])
    scene_pts = np.concatenate([mesh.vertices.astype(np.float64), cam_pos])
    center = 0.5 * (scene_pts.min(axis=0) + scene_pts.max(axis=0))
    reach = float(np.abs(cam_pos - center).max()) + 1.0
    near = max(args.sky_near, 1.05 * reach)
    ratios = np.geomspace(near, args.sky_far, max(1, args.sky_layers))
    layers = []
    for e in ratios:
        faces = [FeatureAtlas(data=rng.normal(0.0, 0.1, size=(args.face_res, args.face_res, d))
                              .astype(np.float32)) for _ in range(6)]
        layers.append(SkyLayer(center=center.astype(np.float32),
                               half_extents=np.full(3, e, dtype=np.float32), faces=faces))
    hidden = tuple(args.mlp_hidden)
    state = SceneState(
        mesh=mesh, atlas=atlas, sky=SkyboxStack(layers=layers),
        mlp_fg=ShaderMLP.foreground(d, hidden, rng=np.random.default_rng([args.seed, 4])),
        mlp_bg=ShaderMLP.background(d, hidden, rng=np.random.default_rng([args.seed, 5])),
        codebook_fg=None, codebook_sky=None,
        config=SceneConfig(feature_dim=d, codebook_size=args.codebook_size, mlp_hidden=hidden),
    ).validate()
    save_scene(state, args.out)
    payload = {"scene": str(args.out), "vertices": mesh.n_vertices, "faces": mesh.n_faces,
               "sky_layers": len(layers)}
    _emit(payload, args.json, f"prepared scene at {args.out}: "
          f"{mesh.n_vertices} vertices, {mesh.n_faces} faces, {len(layers)} sky layers")
    return 0


# -- train -------------------------------------------------------------------------

def cmd_train(args) -> int:
    from .scene_io import load_scene, load_views, save_scene
    from .train import TrainConfig, Trainer

    state, extras = load_scene(args.scene)
    if args.no_mlp:
        state.config.shade_mode = "flat"
        state.mlp_fg = None
        state.mlp_bg = None
    views = load_views(args.views)
    val_views = load_views(args.val_views) if args.val_views else None
    cfg = TrainConfig(
        learning_rate=args.lr, iterations=args.iters,
        lambda_perc=args.lambda_perc, lambda_vq=args.lambda_vq,
        vq_enabled=not args.no_vq, vq_warmup=args.vq_warmup,
        reseed_every=args.reseed_every, seed=args.seed,
        checkpoint_every=args.checkpoint_every, val_every=args.val_every,
    )
    optimizer_state = extras["optimizer"] if args.resume else None
    trainer = Trainer(state, views, cfg, val_views=val_views, optimizer_state=optimizer_state)
    history = trainer.fit(out_dir=args.scene)
    last = history[-1] if history else {"total": None}
    payload = {"scene": str(args.scene), "steps": trainer.step_index, "final_loss": last.get("total")}
    _emit(payload, args.json,
          f"trained to step {trainer.step_index}; final loss {last.get('total')}")
    return 0


# -- render ------------------------------------------------------------------------

def cmd_render(args) -> int:
    from .images import write_image
    from .render import render_view
    from .scene_io import camera_from_json, load_scene

    state, _ = load_scene(args.scene)
    cam = camera_from_json(json.loads(Path(args.pose).read_text()))
    out = render_view(state, cam, return_buffers=bool(args.dump_buffers))
    write_image(args.out, out["image"])
    if args.dump_buffers:
        dump = Path(args.dump_buffers)
        dump.mkdir(parents=True, exist_ok=True)
        for i, fb in enumerate(out["buffers"]):
            (dump / f"layer{i}_features.f32").write_bytes(
                np.ascontiguousarray(fb.features, dtype=np.float32).tobytes())
            vis = fb.features[..., :3].astype(np.float64)
            span = max(float(np.abs(vis).max()), 1e-9)
            write_image(dump / f"layer{i}_features.png", 0.5 + 0.5 * vis / span)
            write_image(dump / f"layer{i}_mask.png", fb.mask.astype(np.float32))
            if fb.depth is not None:
                depth = np.where(np.isfinite(fb.depth), fb.depth, 0.0)
                span = max(float(depth.max()), 1e-9)
                write_image(dump / f"layer{i}_depth.png", (depth / span).astype(np.float32))
    _emit({"out": str(args.out)}, args.json, f"rendered {args.out}")
    return 0


# -- bake --------------------------------------------------------------------------

def cmd_bake(args) -> int:
    from .bake import bake, bundle_total_bytes
    from .scene_io import load_scene

    state, _ = load_scene(args.scene)
    manifest = bake(state, args.out, quantize=not args.no_vq, texture_limit=args.texture_limit)
    payload = {"bundle": str(args.out), "quantized": manifest["quantized"],
               "bytes": bundle_total_bytes(args.out)}
    _emit(payload, args.json,
          f"baked {'quantized' if manifest['quantized'] else 'float'} bundle at {args.out} "
          f"({payload['bytes']} bytes)")
    return 0


# -- eval --------------------------------------------------------------------------

def cmd_eval(args) -> int:
    from .metrics import mse, psnr, ssim
    from .render import render_view
    from .scene_io import load_scene, load_views

    state, _ = load_scene(args.scene)
    views = load_views(args.views)
    rows = []
    for v in views:
        img = render_view(state, v.camera)["image"]
        rows.append({
            "view": v.name,
            "mse": mse(img, v.image),
            "psnr": psnr(img, v.image),
            "ssim": ssim(img, v.image),
            "lpips": "n/a",
            "fid": "n/a",
        })
    finite = [r["psnr"] for r in rows if np.isfinite(r["psnr"])]
    summary = {
        "mean_mse": float(np.mean([r["mse"] for r in rows])),
        "mean_psnr": float(np.mean(finite)) if finite else float("inf"),
        "mean_ssim": float(np.mean([r["ssim"] for r in rows])),
    }
    payload = {"rows": rows, "summary": summary}
    lines = [f"{'view':<12} {'MSE':>10} {'PSNR':>8} {'SSIM':>8} {'LPIPS':>6} {'FID':>6}"]
    for r in rows:
        p = "inf" if np.isinf(r["psnr"]) else f"{r['psnr']:.2f}"
        lines.append(
            f"{r['view']:<12} {r['mse']:>10.6f} {p:>8} {r['ssim']:>8.4f} "
            f"{r['lpips']:>6} {r['fid']:>6}")
    lines.append(f"mean: mse={summary['mean_mse']:.6f} psnr={summary['mean_psnr']:.2f} "
                 f"ssim={summary['mean_ssim']:.4f}")
    _emit(payload, args.json, "\n".join(lines))
    if args.out:
        Path(args.out).write_text(json.dumps(_json_safe(payload), indent=1))
    return 0


# -- info --------------------------------------------------------------------------

def cmd_info(args) -> int:
    path = Path(args.path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise DataError(f"no manifest.json under {path}", field="path")
    manifest = json.loads(mpath.read_text())
    fmt = manifest.get("format")
    if fmt == "texrast-bundle":
        payload = {
            "kind": "bundle",
            "version": manifest["version"],
            "quantized": manifest["quantized"],
            "feature_dim": manifest["feature_dim"],
            "shade_mode": manifest["shade_mode"],
            "sky_layers": len(manifest["sky_layers"]),
            "mesh_vertices": manifest["mesh"]["vertex_count"],
            "mesh_faces": manifest["mesh"]["face_count"],
            "draw_list": manifest["draw_list"],
            "glsl": manifest["glsl"],
        }
    elif fmt == "texrast-scene":
        payload = {
            "kind": "scene",
            "version": manifest["version"],
            "config": manifest["config"],
            "sky_layers": len(manifest["sky"]),
            "quantized": manifest["atlas"]["indices"] is not None,
            "trained_steps": (manifest.get("training") or {}).get("optimizer", {}).get("step", 0)
            if (manifest.get("training") or {}).get("optimizer") else 0,
        }
    else:
        raise DataError(f"unknown manifest format {fmt!r}", field="format")
    human = "\n".join(f"{k}: {v}" for k, v in payload.items() if k != "draw_list")
    _emit(payload, args.json, human)
    return 0


# -- synth -------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .synth import RoomSpec, write_room_dataset

    spec = RoomSpec(seed=args.seed, image_size=args.image_size,
                    atlas_resolution=args.atlas_res, shade_mode="mlp")
    out = write_room_dataset(args.out, spec)
    payload = {k: str(v) for k, v in out.items()}
    _emit(payload, args.json,
          f"wrote synthetic dataset under {args.out} "
          f"({out['n_train']} train / {out['n_val']} val views)")
    return 0


# -- dispatch ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="texrast",
                                description="neural-texture scene training and baking toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_json(sp):
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("prep", help="preprocess a mesh into a trainable scene")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--cameras", required=True)
    sp.add_argument("--target-verts", type=int, default=50000)
    sp.add_argument("--cell", type=float, default=0.05)
    sp.add_argument("--atlas-res", type=int, default=1024)
    sp.add_argument("--out", required=True)
    sp.add_argument("--feature-dim", type=int, default=12)
    sp.add_argument("--codebook-size", type=int, default=1024)
    sp.add_argument("--mlp-hidden", type=int, nargs="+", default=[32, 32, 32])
    sp.add_argument("--sky-layers", type=int, default=6)
    sp.add_argument("--sky-near", type=float, default=150.0)
    sp.add_argument("--sky-far", type=float, default=2400.0)
    sp.add_argument("--face-res", type=int, default=512)
    sp.add_argument("--boundary-weight", type=float, default=1.0)
    sp.add_argument("--no-cull", action="store_true")
    sp.add_argument("--seed", type=int, default=0)
    add_json(sp)
    sp.set_defaults(func=cmd_prep)

    sp = sub.add_parser("train", help="optimize a scene against posed images")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--views", required=True)
    sp.add_argument("--iters", type=int, default=20000)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--lambda-perc", type=float, default=0.05)
    sp.add_argument("--lambda-vq", type=float, default=1.0)
    sp.add_argument("--no-vq", action="store_true")
    sp.add_argument("--no-mlp", action="store_true",
                    help="flat color-texture ablation (drops the MLP shaders)")
    sp.add_argument("--vq-warmup", type=int, default=500)
    sp.add_argument("--reseed-every", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--checkpoint-every", type=int, default=0)
    sp.add_argument("--val-views", default=None)
    sp.add_argument("--val-every", type=int, default=0)
    sp.add_argument("--resume", action="store_true",
                    help="continue from the optimizer state stored in the scene")
    add_json(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("render", help="render a pose through the reference CPU path")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--pose", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--dump-buffers", default=None)
    add_json(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("bake", help="export a real-time bundle")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-vq", action="store_true", help="bake full float textures")
    sp.add_argument("--texture-limit", type=int, default=8192)
    add_json(sp)
    sp.set_defaults(func=cmd_bake)

    sp = sub.add_parser("eval", help="PSNR/SSIM/MSE against held-out views")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--views", required=True)
    sp.add_argument("--out", default=None)
    add_json(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("info", help="summarize a scene or bundle directory")
    sp.add_argument("path")
    add_json(sp)
    sp.set_defaults(func=cmd_info)

    sp = sub.add_parser("synth", help="generate the synthetic room dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--image-size", type=int, default=64)
    sp.add_argument("--atlas-res", type=int, default=128)
    add_json(sp)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TexrastError as exc:
        if getattr(args, "json", False):
            print(json.dumps({"error": str(exc), "code": exc.exit_code}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
