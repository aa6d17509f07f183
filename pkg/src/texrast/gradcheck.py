"""64-bit finite-difference verification of the analytic training gradients.

Re-runs the objective with float64 copies of every parameter. Because the
quantizer is piecewise constant and trained with the straight-through
estimator, finite differences are taken on the surrogate with stop-gradient
arguments frozen at the base point (see train.FrozenSTE); the exact gradient
of that surrogate is what the implemented backward pass computes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import PerceptualLoss
from .scene import SceneState
from .train import (
    FrozenSTE,
    TrainConfig,
    TrainView,
    ViewCache,
    build_cache,
    evaluate_objective,
    make_meta,
    named_parameters,
)


def float64_parameters(state: SceneState) -> dict[str, np.ndarray]:
    return {k: v.astype(np.float64) for k, v in named_parameters(state).items()}


def densify_gradients(params: dict[str, np.ndarray], grads: dict) -> dict[str, np.ndarray]:
    """Expand sparse row gradients to full arrays (toy scale only)."""
    full = {k: np.zeros_like(v) for k, v in params.items()}
    for key, g in grads["dense"].items():
        full[key] = full[key] + g
    for key, (ids, rows) in grads["rows"].items():
        full[key][ids] += rows
    return full


@dataclass
class GradCheckReport:
    n_params: int
    n_failed: int
    max_rel_err: float
    worst: tuple[str, int] | None
    terms: dict

    @property
    def passed(self) -> bool:
        return self.n_failed == 0


def check_objective_gradients(
    state: SceneState,
    view: TrainView,
    cfg: TrainConfig,
    *,
    h: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-8,
    perceptual: PerceptualLoss | None = None,
    cache: ViewCache | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of the full objective against central FD."""
    params = float64_parameters(state)
    meta = make_meta(state)
    if cache is None:
        cache = build_cache(state, view, znear=cfg.znear)
    vq_active = cfg.vq_enabled and state.codebook_fg is not None

    terms, grads = evaluate_objective(
        params, meta, cache, cfg,
        vq_active=vq_active, collect_grads=True, perceptual=perceptual,
    )
    analytic = densify_gradients(params, grads)

    frozen = FrozenSTE.capture(params, meta) if vq_active else None

    def value() -> float:
        t, _ = evaluate_objective(
            params, meta, cache, cfg,
            vq_active=vq_active, collect_grads=False, frozen=frozen,
            perceptual=perceptual,
        )
        return t["total"]

    n_params = 0
    n_failed = 0
    max_rel = 0.0
    worst = None
    for key in sorted(params):
        flat = params[key].reshape(-1)
        a_flat = analytic[key].reshape(-1)
        for i in range(flat.size):
            n_params += 1
            orig = flat[i]
            flat[i] = orig + h
            f_plus = value()
            flat[i] = orig - h
            f_minus = value()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            a = a_flat[i]
            err = abs(a - fd)
            tol = atol + rtol * max(abs(a), abs(fd))
            rel = err / max(abs(a), abs(fd), atol)
            if rel > max_rel:
                max_rel = rel
                worst = (key, i)
            if err > tol:
                n_failed += 1
    return GradCheckReport(
        n_params=n_params, n_failed=n_failed, max_rel_err=max_rel, worst=worst, terms=terms
    )
