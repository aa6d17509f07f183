"""Joint optimization of atlases, skyboxes, codebooks and shader MLPs.

The objective evaluation is a pure function of a flat parameter dict plus a
per-view raster cache (geometry is static, so footprints are computed once per
view). `train_step` drives it with float32 parameters and applies lazy Adam
updates; the 64-bit gradient-check harness drives the same function with
float64 copies and a frozen straight-through snapshot.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import shading, vq
from .backend import kernels
from .errors import NumericError, ValidationError
from .losses import PerceptualLoss, PyramidGradientLoss, photometric_loss
from .raster import DEFAULT_ZNEAR, SampleRecord, geometry_pass
from .scene import Camera, Codebook, FeatureAtlas, SceneState

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    iterations: int = 20000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_perc: float = 0.05
    lambda_vq: float = 1.0
    vq_beta: float = 0.25
    vq_warmup: int = 500
    vq_enabled: bool = True
    reseed_every: int = 100
    seed: int = 0
    checkpoint_every: int = 0
    val_every: int = 0
    znear: float = DEFAULT_ZNEAR

    def validate(self) -> "TrainConfig":
        # learning_rate == 0 is allowed: it must leave the state bitwise unchanged.
        if self.learning_rate < 0:
            raise ValidationError("learning rate must be >= 0", field="train.learning_rate")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0", field="train.iterations")
        for name in ("lambda_perc", "lambda_vq", "vq_beta"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0", field=f"train.{name}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must lie in [0, 1)", field="train.beta1")
        return self


@dataclass
class TrainView:
    camera: Camera
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    mask: np.ndarray | None = None  # (H, W) bool, True = pixel participates in the loss
    name: str = ""

    def validate(self) -> "TrainView":
        self.camera.validate()
        h, w = self.camera.height, self.camera.width
        if self.image.shape != (h, w, 3):
            raise ValidationError(
                f"image shape {self.image.shape} does not match camera {h}x{w}",
                field=f"view[{self.name}].image",
            )
        if not np.isfinite(self.image).all():
            raise ValidationError("non-finite training image", field=f"view[{self.name}].image")
        if self.mask is not None and self.mask.shape != (h, w):
            raise ValidationError("mask shape mismatch", field=f"view[{self.name}].mask")
        return self


# -- parameter registry ---------------------------------------------------------

def named_parameters(state: SceneState) -> dict[str, np.ndarray]:
    """Flat dict of trainable arrays; atlas entries are (texels, D) views."""
    d = state.feature_dim
    params: dict[str, np.ndarray] = {"atlas": state.atlas.data.reshape(-1, d)}
    for li, fi, face in state.sky_faces():
        params[f"sky.{li}.{fi}"] = face.data.reshape(-1, d)
    if state.config.shade_mode == "mlp":
        if state.mlp_fg is not None:
            for n, a in state.mlp_fg.named_arrays():
                params[f"mlp_fg.{n}"] = a
        if state.mlp_bg is not None:
            for n, a in state.mlp_bg.named_arrays():
                params[f"mlp_bg.{n}"] = a
    if state.codebook_fg is not None:
        params["codebook_fg"] = state.codebook_fg.codes
    if state.codebook_sky is not None:
        params["codebook_sky"] = state.codebook_sky.codes
    return params


@dataclass(frozen=True)
class AtlasFamily:
    key: str  # parameter key, e.g. "atlas" or "sky.0.3"
    codebook_key: str | None  # "codebook_fg"/"codebook_sky" when quantized


@dataclass
class SceneMeta:
    """Structural description of the scene the objective needs."""

    feature_dim: int
    families: list[AtlasFamily]
    index_maps: dict[str, np.ndarray]  # family key -> flat uint16 view (live)
    mode: str  # 'mlp' | 'flat'
    view_encoding: str
    fg_acts: list[str]
    bg_trunk_acts: list[str]
    bg_color_acts: list[str]
    n_sky: int


def family_atlases(state: SceneState) -> dict[str, FeatureAtlas]:
    out = {"atlas": state.atlas}
    for li, fi, face in state.sky_faces():
        out[f"sky.{li}.{fi}"] = face
    return out


def make_meta(state: SceneState) -> SceneMeta:
    families = []
    index_maps = {}
    for key, atlas in family_atlases(state).items():
        cb = None
        if atlas.quantized:
            cb = "codebook_fg" if key == "atlas" else "codebook_sky"
            index_maps[key] = atlas.indices.reshape(-1)
        families.append(AtlasFamily(key=key, codebook_key=cb))
    fg_acts = [d.activation for d in state.mlp_fg.layers] if state.mlp_fg else []
    bg_trunk = [d.activation for d in state.mlp_bg.trunk] if state.mlp_bg else []
    bg_color = [d.activation for d in state.mlp_bg.color_layers] if state.mlp_bg else []
    return SceneMeta(
        feature_dim=state.feature_dim,
        families=families,
        index_maps=index_maps,
        mode=state.config.shade_mode,
        view_encoding=state.config.view_encoding,
        fg_acts=fg_acts,
        bg_trunk_acts=bg_trunk,
        bg_color_acts=bg_color,
        n_sky=len(state.sky),
    )


# -- per-view raster cache -------------------------------------------------------

@dataclass
class ViewCache:
    height: int
    width: int
    target: np.ndarray  # (H, W, 3) float32
    loss_mask: np.ndarray | None
    mask_image: np.ndarray  # (H, W) bool mesh coverage
    fg: SampleRecord | None
    sky: list[list[tuple[int, SampleRecord]]]  # [layer][(face, record)]
    dirs: np.ndarray  # (H*W, 3) float64 unit view directions
    touched: dict[str, tuple[np.ndarray, np.ndarray]]  # key -> (unique ids, inverse)


def build_cache(state: SceneState, view: TrainView, *, znear: float = DEFAULT_ZNEAR) -> ViewCache:
    cam = view.camera
    d = state.feature_dim
    tri, _, u, v = geometry_pass(state.mesh, cam, znear=znear)
    mask = tri >= 0
    pix = np.nonzero(mask.reshape(-1))[0]
    fg = None
    touched: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    if len(pix):
        va, ua = state.atlas.height, state.atlas.width
        idx, w = kernels.bilinear_setup(u.reshape(-1)[pix], v.reshape(-1)[pix], va, ua)
        fg = SampleRecord(pixels=pix, idx=idx, weights=w)
        uniq, inv = np.unique(idx.reshape(-1), return_inverse=True)
        touched["atlas"] = (uniq, inv)

    dirs = cam.pixel_directions().reshape(-1, 3)
    sky: list[list[tuple[int, SampleRecord]]] = []
    for li, layer in enumerate(state.sky.layers):
        origin = cam.origin()
        if not layer.contains(origin[None], strict=True)[0]:
            raise ValidationError(
                f"camera {view.name!r} outside sky layer {li}", field=f"sky.layer{li}"
            )
        n = dirs.shape[0]
        face = np.empty(n, dtype=np.int32)
        us = np.empty(n, dtype=np.float64)
        vs = np.empty(n, dtype=np.float64)
        kernels.sky_exit_uv(
            np.ascontiguousarray(origin),
            np.ascontiguousarray(dirs),
            np.ascontiguousarray(layer.center, dtype=np.float64),
            np.ascontiguousarray(layer.half_extents, dtype=np.float64),
            face, us, vs,
        )
        recs = []
        for f in range(6):
            fpix = np.nonzero(face == f)[0]
            if not len(fpix):
                continue
            res_v, res_u = layer.faces[f].height, layer.faces[f].width
            idx, w = kernels.bilinear_setup(us[fpix], vs[fpix], res_v, res_u)
            recs.append((f, SampleRecord(pixels=fpix, idx=idx, weights=w)))
            uniq, inv = np.unique(idx.reshape(-1), return_inverse=True)
            touched[f"sky.{li}.{f}"] = (uniq, inv)
        sky.append(recs)
    return ViewCache(
        height=cam.height,
        width=cam.width,
        target=np.ascontiguousarray(view.image, dtype=np.float32),
        loss_mask=view.mask,
        mask_image=mask,
        fg=fg,
        sky=sky,
        dirs=dirs,
        touched=touched,
    )


# -- the full objective (Eq. 6 shape: rgb + perc + vq) ---------------------------

@dataclass
class FrozenSTE:
    """Stop-gradient captures for the finite-difference surrogate.

    The quantizer is piecewise constant and the straight-through estimator
    copies gradients through it, so the function whose finite differences
    equal the implemented backward is the one where every stop-gradient
    argument (assignments, sg[T], sg[T_E]) is held at its base value and the
    rendered texel value is raw + (quant_base - raw_base).
    """

    indices: dict[str, np.ndarray]
    raw: dict[str, np.ndarray]
    quant: dict[str, np.ndarray]

    @staticmethod
    def capture(params: dict[str, np.ndarray], meta: SceneMeta) -> "FrozenSTE":
        indices, raw, quant = {}, {}, {}
        for fam in meta.families:
            if fam.codebook_key is None:
                continue
            idx = meta.index_maps[fam.key].astype(np.int64).copy()
            indices[fam.key] = idx
            raw[fam.key] = params[fam.key].copy()
            quant[fam.key] = params[fam.codebook_key][idx].copy()
        return FrozenSTE(indices=indices, raw=raw, quant=quant)


def _tuples(params, prefix: str, group: str, acts: list[str]):
    return [
        (params[f"{prefix}.{group}.{i}.weight"], params[f"{prefix}.{group}.{i}.bias"], a)
        for i, a in enumerate(acts)
    ]


def evaluate_objective(
    params: dict[str, np.ndarray],
    meta: SceneMeta,
    cache: ViewCache,
    cfg: TrainConfig,
    *,
    vq_active: bool,
    collect_grads: bool,
    frozen: FrozenSTE | None = None,
    perceptual: PerceptualLoss | None = None,
):
    """Render one view from `params`, compute the full objective, optionally grads.

    Returns (terms, grads) where terms has keys rgb/perc/vq/total and grads is
    None or {"dense": {key: array}, "rows": {family_key: (ids, grad_rows)}}.
    """
    d = meta.feature_dim
    npx = cache.height * cache.width
    dtype = params["atlas"].dtype
    dirs = cache.dirs.astype(dtype)
    d_enc_all = shading.encode_dirs(dirs, meta.view_encoding)
    quantized = {f.key: (vq_active and f.codebook_key is not None) for f in meta.families}
    fam_by_key = {f.key: f for f in meta.families}

    def gather_family(key: str, rec: SampleRecord) -> np.ndarray:
        """Bilinear features for one footprint record, dequantizing on the fly."""
        raw = params[key]
        flat = rec.idx.reshape(-1)
        if not quantized[key]:
            picked = raw[flat]
        elif frozen is not None:
            picked = raw[flat] + (frozen.quant[key][flat] - frozen.raw[key][flat])
        else:
            codes = params[fam_by_key[key].codebook_key]
            picked = codes[meta.index_maps[key][flat].astype(np.int64)]
        picked = picked.reshape(*rec.idx.shape, raw.shape[1])
        wf = rec.weights.astype(raw.dtype)
        return (wf[..., None] * picked).sum(axis=1)

    # ---- forward: per-layer colors/opacities (flat npx arrays)
    colors: list[np.ndarray] = []
    opacities: list[np.ndarray] = []
    fg_ctx = None
    fg_feats = None
    color_fg_flat = np.zeros((npx, 3), dtype=dtype)
    o0 = cache.mask_image.reshape(-1).astype(dtype)
    if cache.fg is not None:
        fg_feats = gather_family("atlas", cache.fg)
        d_fg = d_enc_all[cache.fg.pixels]
        if meta.mode == "mlp":
            layers = _tuples(params, "mlp_fg", "layers", meta.fg_acts)
            color_fg, tape = shading.fg_forward(layers, fg_feats, d_fg)
            fg_ctx = (layers, tape)
        else:
            color_fg = shading.flat_fg_forward(fg_feats)
            fg_ctx = color_fg
        color_fg_flat[cache.fg.pixels] = color_fg
    colors.append(color_fg_flat)
    opacities.append(o0)

    sky_ctxs = []
    if meta.n_sky:
        if meta.mode == "mlp":
            bg_trunk = _tuples(params, "mlp_bg", "trunk", meta.bg_trunk_acts)
            bg_op = (params["mlp_bg.opacity.weight"], params["mlp_bg.opacity.bias"], "sigmoid")
            bg_color = _tuples(params, "mlp_bg", "color", meta.bg_color_acts)
        for li in range(meta.n_sky):
            feats = np.zeros((npx, d), dtype=dtype)
            for f, rec in cache.sky[li]:
                feats[rec.pixels] = gather_family(f"sky.{li}.{f}", rec)
            if meta.mode == "mlp":
                opacity, color, ctx = shading.bg_forward(bg_trunk, bg_op, bg_color, feats, d_enc_all)
            else:
                opacity, color = shading.flat_bg_forward(feats)
                ctx = (opacity, color)
            sky_ctxs.append((ctx, feats))
            if li == meta.n_sky - 1:
                opacity = np.ones(npx, dtype=dtype)  # farthest layer fully covers
            colors.append(color)
            opacities.append(opacity)

    image = shading.composite_images(colors, opacities).reshape(cache.height, cache.width, 3)

    # ---- loss terms
    target = cache.target.astype(dtype)
    rgb_loss, g_rgb = photometric_loss(image, target, cache.loss_mask)
    perc_loss = 0.0
    g_perc = None
    if cfg.lambda_perc > 0:
        fn = perceptual if perceptual is not None else PyramidGradientLoss()
        perc_loss, g_perc = fn(image, target, cache.loss_mask)

    vq_total = 0.0
    vq_ctx: dict[str, dict] = {}  # codebook key -> pooled rows info
    if vq_active and cfg.lambda_vq > 0:
        for cb_key in ("codebook_fg", "codebook_sky"):
            fams = [
                f for f in meta.families
                if f.codebook_key == cb_key and f.key in cache.touched
            ]
            if not fams or cb_key not in params:
                continue
            slices, rows_l, idx_l = [], [], []
            start = 0
            for f in fams:
                ids = cache.touched[f.key][0]
                rows_l.append(params[f.key][ids])
                if frozen is not None:
                    idx_l.append(frozen.indices[f.key][ids])
                else:
                    idx_l.append(meta.index_maps[f.key][ids].astype(np.int64))
                slices.append((f.key, ids, start, start + len(ids)))
                start += len(ids)
            pooled = np.concatenate(rows_l, axis=0)
            pooled_idx = np.concatenate(idx_l, axis=0)
            codes = params[cb_key]
            if frozen is None:
                loss_cb, g_rows, g_codes = vq.vq_loss(pooled, codes, pooled_idx, cfg.vq_beta)
            else:
                raw_frozen = np.concatenate(
                    [frozen.raw[f.key][cache.touched[f.key][0]] for f in fams], axis=0
                )
                quant_frozen = np.concatenate(
                    [frozen.quant[f.key][cache.touched[f.key][0]] for f in fams], axis=0
                )
                n = len(pooled)
                align = ((raw_frozen - codes[pooled_idx]).astype(np.float64) ** 2).sum() / n
                commit = ((quant_frozen - pooled).astype(np.float64) ** 2).sum() / n
                loss_cb = float(align + cfg.vq_beta * commit)
                g_rows = (2.0 * cfg.vq_beta / n) * (pooled - quant_frozen)
                g_codes = np.zeros_like(codes)
                np.add.at(g_codes, pooled_idx, (-2.0 / n) * (raw_frozen - codes[pooled_idx]))
            vq_total += loss_cb
            vq_ctx[cb_key] = {"slices": slices, "g_rows": g_rows, "g_codes": g_codes}

    total = rgb_loss + cfg.lambda_perc * perc_loss + cfg.lambda_vq * vq_total
    terms = {"rgb": rgb_loss, "perc": perc_loss, "vq": vq_total, "total": total}
    if not collect_grads:
        return terms, None

    # ---- backward
    g_image = g_rgb if g_perc is None else g_rgb + cfg.lambda_perc * g_perc
    g_flat = g_image.reshape(npx, 3)
    g_colors, g_opacities = shading.composite_backward(g_flat, colors, opacities)

    dense: dict[str, np.ndarray] = {}
    rows_grads: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def scatter_family(key: str, rec: SampleRecord, g_feats: np.ndarray):
        ids, inv = cache.touched[key]
        wf = rec.weights.astype(dtype)
        addend = (wf[..., None] * g_feats[:, None, :]).reshape(-1, d)
        acc = np.zeros((len(ids), d), dtype=dtype)
        np.add.at(acc, inv, addend)
        if key in rows_grads:
            prev_ids, prev = rows_grads[key]
            rows_grads[key] = (prev_ids, prev + acc)
        else:
            rows_grads[key] = (ids, acc)

    if cache.fg is not None:
        g_color_fg = g_colors[0][cache.fg.pixels]
        if meta.mode == "mlp":
            layers, tape = fg_ctx
            g_feat, _, mlp_grads = shading.fg_backward(layers, tape, d, g_color_fg)
            for i, (dw, db) in enumerate(mlp_grads):
                dense[f"mlp_fg.layers.{i}.weight"] = dw
                dense[f"mlp_fg.layers.{i}.bias"] = db
        else:
            g_feat = shading.flat_fg_backward(fg_ctx, g_color_fg, d)
        scatter_family("atlas", cache.fg, g_feat)

    for li in range(meta.n_sky):
        ctx, feats = sky_ctxs[li]
        g_color = g_colors[1 + li]
        if li == meta.n_sky - 1:
            g_op = np.zeros(npx, dtype=dtype)  # opacity forced to 1: no gradient
        else:
            g_op = g_opacities[1 + li]
        if meta.mode == "mlp":
            g_feats, _, (trunk_g, op_g, color_g) = shading.bg_backward(
                bg_trunk, bg_op, bg_color, ctx, g_op, g_color
            )
            for i, (dw, db) in enumerate(trunk_g):
                _accum(dense, f"mlp_bg.trunk.{i}.weight", dw)
                _accum(dense, f"mlp_bg.trunk.{i}.bias", db)
            _accum(dense, "mlp_bg.opacity.weight", op_g[0])
            _accum(dense, "mlp_bg.opacity.bias", op_g[1])
            for i, (dw, db) in enumerate(color_g):
                _accum(dense, f"mlp_bg.color.{i}.weight", dw)
                _accum(dense, f"mlp_bg.color.{i}.bias", db)
        else:
            opacity, color = ctx
            g_feats = shading.flat_bg_backward(opacity, color, g_op, g_color, d)
        for f, rec in cache.sky[li]:
            scatter_family(f"sky.{li}.{f}", rec, g_feats[rec.pixels])

    # VQ gradients: commitment to raw rows, alignment to the codebook.
    for cb_key, ctx in vq_ctx.items():
        dense[cb_key] = cfg.lambda_vq * ctx["g_codes"]
        for key, ids, lo, hi in ctx["slices"]:
            g_commit = cfg.lambda_vq * ctx["g_rows"][lo:hi]
            if key in rows_grads:
                prev_ids, prev = rows_grads[key]
                rows_grads[key] = (prev_ids, prev + g_commit)
            else:
                rows_grads[key] = (ids, g_commit.astype(dtype))

    return terms, {"dense": dense, "rows": rows_grads}


def _accum(d: dict, key: str, val: np.ndarray):
    if key in d:
        d[key] = d[key] + val
    else:
        d[key] = val


# -- lazy Adam -------------------------------------------------------------------

class LazyAdam:
    """Adam with per-row lazy moments for atlas tensors.

    Only rows that received gradient update their moments (decay included), so
    huge atlases never pay dense moment updates. Dense tensors use standard
    Adam. Bias correction uses the shared global step.
    """

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def _ensure(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like)
            self.v[name] = np.zeros_like(like)

    def begin_step(self):
        self.step += 1

    def _apply(self, m, v, g, param, sel=None):
        b1, b2 = self.beta1, self.beta2
        mc = b1 * (m if sel is None else m[sel]) + (1.0 - b1) * g
        vc = b2 * (v if sel is None else v[sel]) + (1.0 - b2) * (g * g)
        if sel is None:
            m[...] = mc
            v[...] = vc
        else:
            m[sel] = mc
            v[sel] = vc
        mhat = mc / (1.0 - b1 ** self.step)
        vhat = vc / (1.0 - b2 ** self.step)
        upd = self.lr * mhat / (np.sqrt(vhat) + self.eps)
        if sel is None:
            param[...] = param - upd
        else:
            param[sel] = param[sel] - upd

    def update_dense(self, name: str, param: np.ndarray, grad: np.ndarray):
        self._ensure(name, param)
        self._apply(self.m[name], self.v[name], grad.astype(param.dtype, copy=False), param)

    def update_rows(self, name: str, param: np.ndarray, rows: np.ndarray, grad_rows: np.ndarray):
        self._ensure(name, param)
        self._apply(
            self.m[name], self.v[name], grad_rows.astype(param.dtype, copy=False), param, sel=rows
        )

    def reset_rows(self, name: str, rows: np.ndarray):
        if name in self.m:
            self.m[name][rows] = 0.0
            self.v[name][rows] = 0.0

    def state_dict(self) -> dict:
        return {"step": self.step, "m": self.m, "v": self.v}

    def load_state_dict(self, sd: dict):
        self.step = int(sd["step"])
        self.m = dict(sd["m"])
        self.v = dict(sd["v"])


# -- trainer ----------------------------------------------------------------------

class Trainer:
    def __init__(
        self,
        state: SceneState,
        views: list[TrainView],
        cfg: TrainConfig,
        *,
        val_views: list[TrainView] | None = None,
        perceptual: PerceptualLoss | None = None,
        optimizer_state: dict | None = None,
    ):
        cfg.validate()
        state.validate()
        if not views:
            raise ValidationError("need at least one training view", field="views")
        for v in views:
            v.validate()
        self.state = state
        self.views = views
        self.val_views = val_views or []
        self.cfg = cfg
        self.perceptual = perceptual if perceptual is not None else PyramidGradientLoss()
        self.caches = [build_cache(state, v, znear=cfg.znear) for v in views]
        self.opt = LazyAdam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        if optimizer_state is not None:
            self.opt.load_state_dict(optimizer_state)
        self.params = named_parameters(state)
        self.meta = make_meta(state)
        self.history: list[dict] = []

    @property
    def step_index(self) -> int:
        return self.opt.step

    def _vq_active(self) -> bool:
        return self.cfg.vq_enabled and self.state.codebook_fg is not None

    def _init_codebooks(self):
        """Seed codebooks from the current atlases and assign every texel once."""
        state, cfg = self.state, self.cfg
        k = state.config.codebook_size
        d = state.feature_dim
        rng = np.random.default_rng([cfg.seed, 0xC0DE])
        fg_rows = self.params["atlas"]
        pick = rng.integers(0, fg_rows.shape[0], size=k)
        state.codebook_fg = Codebook(codes=fg_rows[pick].copy())
        res = vq.quantize(state.atlas.data, state.codebook_fg)
        state.atlas.indices = res.indices
        state.atlas.codebook = state.codebook_fg
        sky_keys = [f.key for f in self.meta.families if f.key.startswith("sky.")]
        if sky_keys:
            sizes = np.array([self.params[key].shape[0] for key in sky_keys])
            offsets = np.concatenate([[0], np.cumsum(sizes)])
            flat_pick = rng.integers(0, offsets[-1], size=k)
            codes = np.empty((k, d), dtype=np.float32)
            for i, p in enumerate(flat_pick):
                fam = int(np.searchsorted(offsets, p, side="right")) - 1
                codes[i] = self.params[sky_keys[fam]][p - offsets[fam]]
            state.codebook_sky = Codebook(codes=codes)
            atlases = family_atlases(state)
            for key in sky_keys:
                res = vq.quantize(atlases[key].data, state.codebook_sky)
                atlases[key].indices = res.indices
                atlases[key].codebook = state.codebook_sky
        self.params = named_parameters(state)
        self.meta = make_meta(state)
        log.info("initialized codebooks at step %d (K=%d)", self.opt.step, k)

    def _reassign_touched(self, cache: ViewCache):
        """Refresh nearest-code assignments for this view's touched texels."""
        books = {"codebook_fg": self.state.codebook_fg, "codebook_sky": self.state.codebook_sky}
        for fam in self.meta.families:
            if fam.codebook_key is None or fam.key not in cache.touched:
                continue
            ids = cache.touched[fam.key][0]
            book = books[fam.codebook_key]
            new_idx = vq.nearest_codes(self.params[fam.key][ids], book.codes)
            self.meta.index_maps[fam.key][ids] = new_idx.astype(np.uint16)
            book.usage += np.bincount(new_idx, minlength=book.size).astype(np.int64)

    def train_step(self) -> dict:
        cfg = self.cfg
        s = self.opt.step  # 0-based step about to run
        view_i = s % len(self.views)
        view = self.views[view_i]
        cache = self.caches[view_i]

        if cfg.vq_enabled and self.state.codebook_fg is None and s >= cfg.vq_warmup:
            self._init_codebooks()
        vq_active = self._vq_active()
        if vq_active:
            self._reassign_touched(cache)

        terms, grads = evaluate_objective(
            self.params, self.meta, cache, cfg,
            vq_active=vq_active, collect_grads=True, perceptual=self.perceptual,
        )
        for name, val in terms.items():
            if not np.isfinite(val):
                raise NumericError(
                    f"non-finite {name} loss at step {s} on view {view.name!r}"
                )

        self.opt.begin_step()
        for fam in self.meta.families:  # atlas first, then sky faces, fixed order
            if fam.key in grads["rows"]:
                ids, g = grads["rows"][fam.key]
                self.opt.update_rows(fam.key, self.params[fam.key], ids, g)
        for key in sorted(grads["dense"]):
            self.opt.update_dense(key, self.params[key], grads["dense"][key])

        if vq_active and cfg.reseed_every > 0 and self.opt.step % cfg.reseed_every == 0:
            self._reseed(cache)

        report = {"step": s, "view": view.name, **terms}
        self.history.append(report)
        return report

    def _reseed(self, cache: ViewCache):
        rng = np.random.default_rng([self.cfg.seed, self.opt.step, 7])
        books = {"codebook_fg": self.state.codebook_fg, "codebook_sky": self.state.codebook_sky}
        for cb_key, book in books.items():
            if book is None:
                continue
            fams = [f.key for f in self.meta.families if f.codebook_key == cb_key]
            pools = [self.params[k][cache.touched[k][0]] for k in fams if k in cache.touched]
            if not pools:
                book.usage[:] = 0
                continue
            candidates = np.concatenate(pools, axis=0)
            dead = vq.reseed_dead_codes(book, candidates, rng=rng)
            if len(dead):
                self.opt.reset_rows(cb_key, dead)

    def validation_psnr(self) -> float:
        from .metrics import psnr
        from .render import render_view

        if not self.val_views:
            return float("nan")
        vals = []
        for v in self.val_views:
            img = render_view(self.state, v.camera, znear=self.cfg.znear)["image"]
            vals.append(psnr(img, v.image))
        finite = [x for x in vals if np.isfinite(x)]
        return float(np.mean(finite)) if finite else float("inf")

    def fit(self, out_dir: str | Path | None = None) -> list[dict]:
        from .scene_io import save_scene

        out = Path(out_dir) if out_dir is not None else None
        log_path = None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            log_path = out / "training_log.jsonl"
        while self.opt.step < self.cfg.iterations:
            report = self.train_step()
            s = report["step"]
            if self.cfg.val_every and (s + 1) % self.cfg.val_every == 0:
                report["val_psnr"] = self.validation_psnr()
            if log_path:
                with log_path.open("a") as fh:
                    fh.write(json.dumps(report) + "\n")
            if (
                out
                and self.cfg.checkpoint_every
                and (s + 1) % self.cfg.checkpoint_every == 0
                and (s + 1) < self.cfg.iterations
            ):
                save_scene(self.state, out, optimizer=self.opt.state_dict(), train_config=self.cfg)
        if out:
            save_scene(self.state, out, optimizer=self.opt.state_dict(), train_config=self.cfg)
        return self.history
