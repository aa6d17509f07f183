"""Pure-numpy kernel implementations.

This is the fallback backend behind `texrast.backend`; the compiled Cython
module `texrast._kernels` implements the same signatures with the same
arithmetic ordering, so both backends produce bitwise-identical buffers.
All kernels are sequential over triangles/rows, which makes results
independent of any library thread count.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def raster_triangles(sx, sy, invw, uow, vow, tri_ids, tri_buf, depth_buf, u_buf, v_buf):
    """Z-buffered scanline fill of interior-positive screen-space triangles.

    sx, sy : (T, 3) float64 vertex pixel coordinates (y down).
    invw   : (T, 3) float64 per-vertex 1/view_z.
    uow/vow: (T, 3) float64 per-vertex uv * invw (perspective-correct numerators).
    tri_ids: (T,) int32 face id written to tri_buf.
    Buffers are updated in place; callers init tri_buf to -1 and depth_buf to
    +inf. Coverage follows the top-left fill rule; depth ties keep the earlier
    triangle (strict less-than test).
    """
    height, width = tri_buf.shape
    for t in range(sx.shape[0]):
        x0, x1, x2 = sx[t]
        y0, y1, y2 = sy[t]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if not area2 > 0.0:
            continue
        ix_min = max(0, int(np.floor(min(x0, x1, x2) - 0.5)))
        ix_max = min(width - 1, int(np.ceil(max(x0, x1, x2) - 0.5)))
        iy_min = max(0, int(np.floor(min(y0, y1, y2) - 0.5)))
        iy_max = min(height - 1, int(np.ceil(max(y0, y1, y2) - 0.5)))
        if ix_min > ix_max or iy_min > iy_max:
            continue
        px = np.arange(ix_min, ix_max + 1, dtype=np.float64) + 0.5
        py = np.arange(iy_min, iy_max + 1, dtype=np.float64) + 0.5
        pxg, pyg = np.meshgrid(px, py)

        def edge(ax, ay, bx, by):
            dx, dy = bx - ax, by - ay
            e = dx * (pyg - ay) - dy * (pxg - ax)
            top_left = (dy < 0.0) or (dy == 0.0 and dx > 0.0)
            accept = (e > 0.0) | ((e == 0.0) & top_left)
            return e, accept

        e12, a12 = edge(x1, y1, x2, y2)  # opposite vertex 0
        e20, a20 = edge(x2, y2, x0, y0)  # opposite vertex 1
        e01, a01 = edge(x0, y0, x1, y1)  # opposite vertex 2
        cover = a12 & a20 & a01
        if not cover.any():
            continue
        l0 = e12 / area2
        l1 = e20 / area2
        l2 = e01 / area2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            iw = l0 * invw[t, 0] + l1 * invw[t, 1] + l2 * invw[t, 2]
            z = 1.0 / iw
            sub = (slice(iy_min, iy_max + 1), slice(ix_min, ix_max + 1))
            upd = cover & (z < depth_buf[sub])
            if not upd.any():
                continue
            u = (l0 * uow[t, 0] + l1 * uow[t, 1] + l2 * uow[t, 2]) / iw
            v = (l0 * vow[t, 0] + l1 * vow[t, 1] + l2 * vow[t, 2]) / iw
        depth_buf[sub][upd] = z[upd]
        tri_buf[sub][upd] = tri_ids[t]
        u_buf[sub][upd] = u[upd]
        v_buf[sub][upd] = v[upd]


def coverage_counts(sx, sy, height, width):
    """How many interior-positive triangles claim each pixel (top-left rule).

    Used for UV-chart overlap detection; zero or one everywhere means the
    charts tile without collisions.
    """
    counts = np.zeros((height, width), dtype=np.int32)
    for t in range(sx.shape[0]):
        x0, x1, x2 = sx[t]
        y0, y1, y2 = sy[t]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area2 < 0.0:
            x1, x2, y1, y2 = x2, x1, y2, y1
            area2 = -area2
        if area2 == 0.0:
            continue
        ix_min = max(0, int(np.floor(min(x0, x1, x2) - 0.5)))
        ix_max = min(width - 1, int(np.ceil(max(x0, x1, x2) - 0.5)))
        iy_min = max(0, int(np.floor(min(y0, y1, y2) - 0.5)))
        iy_max = min(height - 1, int(np.ceil(max(y0, y1, y2) - 0.5)))
        if ix_min > ix_max or iy_min > iy_max:
            continue
        px = np.arange(ix_min, ix_max + 1, dtype=np.float64) + 0.5
        py = np.arange(iy_min, iy_max + 1, dtype=np.float64) + 0.5
        pxg, pyg = np.meshgrid(px, py)
        cover = np.ones(pxg.shape, dtype=bool)
        for ax, ay, bx, by in ((x0, y0, x1, y1), (x1, y1, x2, y2), (x2, y2, x0, y0)):
            dx, dy = bx - ax, by - ay
            e = dx * (pyg - ay) - dy * (pxg - ax)
            top_left = (dy < 0.0) or (dy == 0.0 and dx > 0.0)
            cover &= (e > 0.0) | ((e == 0.0) & top_left)
        counts[iy_min : iy_max + 1, ix_min : ix_max + 1] += cover
    return counts


def sky_exit_uv(origin, dirs, center, half, face_out, u_out, v_out):
    """Cuboid exit face + face UV for rays leaving `origin` along `dirs`.

    The origin must lie strictly inside the cuboid, so every ray exits through
    exactly one face; axis ties (corner exits) resolve to the lowest axis.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(dirs, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    h = np.asarray(half, dtype=np.float64)
    with np.errstate(divide="ignore"):
        bound = c + np.where(d >= 0.0, h, -h)
        t = np.where(d != 0.0, (bound - o) / d, np.inf)
    axis = np.argmin(t, axis=1)
    t_exit = np.take_along_axis(t, axis[:, None], axis=1)[:, 0]
    p = o + t_exit[:, None] * d
    q = (p - c) / h
    sign_pos = np.take_along_axis(d, axis[:, None], axis=1)[:, 0] >= 0.0
    face = (axis * 2 + np.where(sign_pos, 0, 1)).astype(np.int32)
    from .scene import FACE_AXES

    u = np.empty(len(d))
    v = np.empty(len(d))
    for f in range(6):
        m = face == f
        if not m.any():
            continue
        _, _, s_axis, s_sign, t_axis, t_sign = FACE_AXES[f]
        u[m] = (s_sign * q[m, s_axis] + 1.0) * 0.5
        v[m] = (t_sign * q[m, t_axis] + 1.0) * 0.5
    face_out[:] = face
    u_out[:] = u
    v_out[:] = v


def bilinear_setup(us, vs, n_rows, n_cols):
    """Footprint of a clamp-to-edge bilinear sample at texel centers.

    Returns (idx, w): (N, 4) int64 flat texel ids into a row-major (V, U)
    grid and (N, 4) float64 weights ordered (x0y0, x1y0, x0y1, x1y1).
    """
    x = np.asarray(us, dtype=np.float64) * n_cols - 0.5
    y = np.asarray(vs, dtype=np.float64) * n_rows - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    cx0 = np.clip(x0, 0, n_cols - 1).astype(np.int64)
    cx1 = np.clip(x0 + 1, 0, n_cols - 1).astype(np.int64)
    cy0 = np.clip(y0, 0, n_rows - 1).astype(np.int64)
    cy1 = np.clip(y0 + 1, 0, n_rows - 1).astype(np.int64)
    idx = np.stack(
        [cy0 * n_cols + cx0, cy0 * n_cols + cx1, cy1 * n_cols + cx0, cy1 * n_cols + cx1], axis=1
    )
    w = np.stack(
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy], axis=1
    )
    return idx, w


def gather_rows(rows, idx, w, out):
    """out[n] = sum_j w[n, j] * rows[idx[n, j]], accumulated in float64."""
    acc = (
        w[:, 0, None] * rows[idx[:, 0]].astype(np.float64)
        + w[:, 1, None] * rows[idx[:, 1]].astype(np.float64)
        + w[:, 2, None] * rows[idx[:, 2]].astype(np.float64)
        + w[:, 3, None] * rows[idx[:, 3]].astype(np.float64)
    )
    out[:] = acc.astype(out.dtype)


def scatter_rows(grad, idx, w, accum):
    """accum[idx[n, j]] += w[n, j] * grad[n], sequential row-major order."""
    addend = (w[:, :, None] * grad[:, None, :]).astype(accum.dtype)
    np.add.at(accum, idx.reshape(-1), addend.reshape(-1, grad.shape[1]))
