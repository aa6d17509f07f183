# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: triangle raster, cuboid exit, bilinear gather/scatter.

Mirrors `texrast._kernels_py` operation-for-operation (same arithmetic order,
same tie rules) so the two backends produce bitwise-identical buffers. All
loops are sequential, which keeps output independent of thread counts.
"""

from libc.math cimport floor, ceil, INFINITY

import numpy as np

from ._kernels_py import bilinear_setup, coverage_counts  # numpy is fine for these

BACKEND_NAME = "compiled"

ctypedef fused floating:
    float
    double

# Face table, kept in sync with texrast.scene.FACE_AXES.
cdef int S_AXIS[6]
cdef int T_AXIS[6]
cdef double S_SIGN[6]
cdef double T_SIGN[6]
S_AXIS[0] = 2; S_SIGN[0] = -1.0; T_AXIS[0] = 1; T_SIGN[0] = -1.0
S_AXIS[1] = 2; S_SIGN[1] = +1.0; T_AXIS[1] = 1; T_SIGN[1] = -1.0
S_AXIS[2] = 0; S_SIGN[2] = +1.0; T_AXIS[2] = 2; T_SIGN[2] = +1.0
S_AXIS[3] = 0; S_SIGN[3] = +1.0; T_AXIS[3] = 2; T_SIGN[3] = -1.0
S_AXIS[4] = 0; S_SIGN[4] = +1.0; T_AXIS[4] = 1; T_SIGN[4] = -1.0
S_AXIS[5] = 0; S_SIGN[5] = -1.0; T_AXIS[5] = 1; T_SIGN[5] = -1.0


def raster_triangles(double[:, ::1] sx, double[:, ::1] sy, double[:, ::1] invw,
                     double[:, ::1] uow, double[:, ::1] vow, int[::1] tri_ids,
                     int[:, ::1] tri_buf, double[:, ::1] depth_buf,
                     double[:, ::1] u_buf, double[:, ::1] v_buf):
    cdef Py_ssize_t height = tri_buf.shape[0]
    cdef Py_ssize_t width = tri_buf.shape[1]
    cdef Py_ssize_t n_tri = sx.shape[0]
    cdef Py_ssize_t t, ix, iy, ix_min, ix_max, iy_min, iy_max
    cdef double x0, x1, x2, y0, y1, y2, area2
    cdef double dx01, dy01, dx12, dy12, dx20, dy20
    cdef bint tl01, tl12, tl20
    cdef double px, py, e01, e12, e20, l0, l1, l2, iw, z, u, v
    cdef double mn, mx

    for t in range(n_tri):
        x0 = sx[t, 0]; x1 = sx[t, 1]; x2 = sx[t, 2]
        y0 = sy[t, 0]; y1 = sy[t, 1]; y2 = sy[t, 2]
        area2 = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if not area2 > 0.0:
            continue
        mn = x0
        if x1 < mn: mn = x1
        if x2 < mn: mn = x2
        mx = x0
        if x1 > mx: mx = x1
        if x2 > mx: mx = x2
        ix_min = <Py_ssize_t>floor(mn - 0.5)
        ix_max = <Py_ssize_t>ceil(mx - 0.5)
        if ix_min < 0: ix_min = 0
        if ix_max > width - 1: ix_max = width - 1
        mn = y0
        if y1 < mn: mn = y1
        if y2 < mn: mn = y2
        mx = y0
        if y1 > mx: mx = y1
        if y2 > mx: mx = y2
        iy_min = <Py_ssize_t>floor(mn - 0.5)
        iy_max = <Py_ssize_t>ceil(mx - 0.5)
        if iy_min < 0: iy_min = 0
        if iy_max > height - 1: iy_max = height - 1
        if ix_min > ix_max or iy_min > iy_max:
            continue

        dx12 = x2 - x1; dy12 = y2 - y1
        dx20 = x0 - x2; dy20 = y0 - y2
        dx01 = x1 - x0; dy01 = y1 - y0
        tl12 = dy12 < 0.0 or (dy12 == 0.0 and dx12 > 0.0)
        tl20 = dy20 < 0.0 or (dy20 == 0.0 and dx20 > 0.0)
        tl01 = dy01 < 0.0 or (dy01 == 0.0 and dx01 > 0.0)

        for iy in range(iy_min, iy_max + 1):
            py = iy + 0.5
            for ix in range(ix_min, ix_max + 1):
                px = ix + 0.5
                e12 = dx12 * (py - y1) - dy12 * (px - x1)
                if not (e12 > 0.0 or (e12 == 0.0 and tl12)):
                    continue
                e20 = dx20 * (py - y2) - dy20 * (px - x2)
                if not (e20 > 0.0 or (e20 == 0.0 and tl20)):
                    continue
                e01 = dx01 * (py - y0) - dy01 * (px - x0)
                if not (e01 > 0.0 or (e01 == 0.0 and tl01)):
                    continue
                l0 = e12 / area2
                l1 = e20 / area2
                l2 = e01 / area2
                iw = l0 * invw[t, 0] + l1 * invw[t, 1] + l2 * invw[t, 2]
                z = 1.0 / iw
                if not z < depth_buf[iy, ix]:
                    continue
                u = (l0 * uow[t, 0] + l1 * uow[t, 1] + l2 * uow[t, 2]) / iw
                v = (l0 * vow[t, 0] + l1 * vow[t, 1] + l2 * vow[t, 2]) / iw
                depth_buf[iy, ix] = z
                tri_buf[iy, ix] = tri_ids[t]
                u_buf[iy, ix] = u
                v_buf[iy, ix] = v


def sky_exit_uv(double[::1] origin, double[:, ::1] dirs, double[::1] center,
                double[::1] half, int[::1] face_out, double[::1] u_out,
                double[::1] v_out):
    cdef Py_ssize_t n = dirs.shape[0]
    cdef Py_ssize_t i, a, axis
    cdef double d, bound, t, t_best
    cdef int face
    cdef double q_s, q_t, p

    for i in range(n):
        t_best = INFINITY
        axis = 0
        for a in range(3):
            d = dirs[i, a]
            if d != 0.0:
                if d >= 0.0:
                    bound = center[a] + half[a]
                else:
                    bound = center[a] - half[a]
                t = (bound - origin[a]) / d
            else:
                t = INFINITY
            if t < t_best:
                t_best = t
                axis = a
        if dirs[i, axis] >= 0.0:
            face = <int>(axis * 2)
        else:
            face = <int>(axis * 2 + 1)
        p = origin[S_AXIS[face]] + t_best * dirs[i, S_AXIS[face]]
        q_s = (p - center[S_AXIS[face]]) / half[S_AXIS[face]]
        p = origin[T_AXIS[face]] + t_best * dirs[i, T_AXIS[face]]
        q_t = (p - center[T_AXIS[face]]) / half[T_AXIS[face]]
        face_out[i] = face
        u_out[i] = (S_SIGN[face] * q_s + 1.0) * 0.5
        v_out[i] = (T_SIGN[face] * q_t + 1.0) * 0.5


def gather_rows(floating[:, ::1] rows, long[:, ::1] idx, double[:, ::1] w, floating[:, ::1] out):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t dim = rows.shape[1]
    cdef Py_ssize_t i, d
    cdef long i0, i1, i2, i3
    cdef double acc
    for i in range(n):
        i0 = idx[i, 0]; i1 = idx[i, 1]; i2 = idx[i, 2]; i3 = idx[i, 3]
        for d in range(dim):
            acc = (w[i, 0] * <double>rows[i0, d]
                   + w[i, 1] * <double>rows[i1, d]
                   + w[i, 2] * <double>rows[i2, d]
                   + w[i, 3] * <double>rows[i3, d])
            out[i, d] = <floating>acc


def scatter_rows(floating[:, ::1] grad, long[:, ::1] idx, double[:, ::1] w, floating[:, ::1] accum):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t dim = grad.shape[1]
    cdef Py_ssize_t i, j, d
    cdef long row
    for i in range(n):
        for j in range(4):
            row = idx[i, j]
            for d in range(dim):
                accum[row, d] = accum[row, d] + <floating>(w[i, j] * <double>grad[i, d])
