# cython: language_level=3
"""Compiled inner loops: flow projection scatter, adaptive warping and its
adjoint, Horn-Schunck Jacobi sweeps.

Semantics mirror ``_pykernels`` exactly; callers validate inputs first.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport round, floor

cnp.import_array()


def project_scatter(const double[:, :, ::1] flow, const double[:, ::1] depth, double scale):
    cdef Py_ssize_t h = flow.shape[0], w = flow.shape[1]
    num_arr = np.zeros((h, w, 2), dtype=np.float64)
    wsum_arr = np.zeros((h, w), dtype=np.float64)
    count_arr = np.zeros((h, w), dtype=np.int64)
    cdef double[:, :, ::1] num = num_arr
    cdef double[:, ::1] wsum = wsum_arr
    cdef long long[:, ::1] count = count_arr
    cdef Py_ssize_t i, j, tx, ty
    cdef double u, v, wt
    with nogil:
        for i in range(h):
            for j in range(w):
                u = flow[i, j, 0]
                v = flow[i, j, 1]
                tx = <Py_ssize_t>round(j + scale * u)
                ty = <Py_ssize_t>round(i + scale * v)
                if tx < 0 or tx >= w or ty < 0 or ty >= h:
                    continue
                wt = 1.0 / depth[i, j]
                wsum[ty, tx] += wt
                num[ty, tx, 0] += wt * u
                num[ty, tx, 1] += wt * v
                count[ty, tx] += 1
    return num_arr, wsum_arr, count_arr


cdef inline double _clamp(double x, double lo, double hi) noexcept nogil:
    if x < lo:
        return lo
    if x > hi:
        return hi
    return x


def warp_forward(const double[:, ::1] src, const double[:, :, ::1] flow,
                 const double[:, :, ::1] kernels, int k):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    out_arr = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, a, b, x0, y0, x1, y1
    cdef int half = k // 2 - 1
    cdef double px, py, fx, fy, kw, acc, val
    cdef double wmax = w - 1, hmax = h - 1
    with nogil:
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        kw = kernels[i, j, a * k + b]
                        if kw == 0.0:
                            continue
                        px = _clamp(j + flow[i, j, 0] + (b - half), 0.0, wmax)
                        py = _clamp(i + flow[i, j, 1] + (a - half), 0.0, hmax)
                        x0 = <Py_ssize_t>floor(px)
                        y0 = <Py_ssize_t>floor(py)
                        x1 = x0 + 1 if x0 + 1 < w else w - 1
                        y1 = y0 + 1 if y0 + 1 < h else h - 1
                        fx = px - x0
                        fy = py - y0
                        val = ((1.0 - fy) * ((1.0 - fx) * src[y0, x0] + fx * src[y0, x1])
                               + fy * ((1.0 - fx) * src[y1, x0] + fx * src[y1, x1]))
                        acc += kw * val
                out[i, j] = acc
    return out_arr


def warp_backward(const double[:, ::1] src, const double[:, :, ::1] flow,
                  const double[:, :, ::1] kernels, int k, const double[:, ::1] grad):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    d_src_arr = np.zeros((h, w), dtype=np.float64)
    d_flow_arr = np.zeros((h, w, 2), dtype=np.float64)
    d_ker_arr = np.zeros((h, w, k * k), dtype=np.float64)
    cdef double[:, ::1] d_src = d_src_arr
    cdef double[:, :, ::1] d_flow = d_flow_arr
    cdef double[:, :, ::1] d_ker = d_ker_arr
    cdef Py_ssize_t i, j, a, b, x0, y0, x1, y1
    cdef int half = k // 2 - 1
    cdef double qx, qy, px, py, fx, fy, kw, g, gk, val, s00, s01, s10, s11
    cdef double wmax = w - 1, hmax = h - 1
    with nogil:
        for i in range(h):
            for j in range(w):
                g = grad[i, j]
                if g == 0.0:
                    continue
                for a in range(k):
                    for b in range(k):
                        kw = kernels[i, j, a * k + b]
                        qx = j + flow[i, j, 0] + (b - half)
                        qy = i + flow[i, j, 1] + (a - half)
                        px = _clamp(qx, 0.0, wmax)
                        py = _clamp(qy, 0.0, hmax)
                        x0 = <Py_ssize_t>floor(px)
                        y0 = <Py_ssize_t>floor(py)
                        x1 = x0 + 1 if x0 + 1 < w else w - 1
                        y1 = y0 + 1 if y0 + 1 < h else h - 1
                        fx = px - x0
                        fy = py - y0
                        s00 = src[y0, x0]
                        s01 = src[y0, x1]
                        s10 = src[y1, x0]
                        s11 = src[y1, x1]
                        val = ((1.0 - fy) * ((1.0 - fx) * s00 + fx * s01)
                               + fy * ((1.0 - fx) * s10 + fx * s11))
                        d_ker[i, j, a * k + b] = g * val
                        if kw == 0.0:
                            continue
                        gk = g * kw
                        d_src[y0, x0] += gk * (1.0 - fy) * (1.0 - fx)
                        d_src[y0, x1] += gk * (1.0 - fy) * fx
                        d_src[y1, x0] += gk * fy * (1.0 - fx)
                        d_src[y1, x1] += gk * fy * fx
                        if qx >= 0.0 and qx <= wmax:
                            d_flow[i, j, 0] += gk * ((1.0 - fy) * (s01 - s00) + fy * (s11 - s10))
                        if qy >= 0.0 and qy <= hmax:
                            d_flow[i, j, 1] += gk * ((1.0 - fx) * (s10 - s00) + fx * (s11 - s01))
    return d_src_arr, d_flow_arr, d_ker_arr


def hs_iterate(const double[:, ::1] ix, const double[:, ::1] iy, const double[:, ::1] it,
               const double[:, ::1] u0, const double[:, ::1] v0, double alpha2, int n_iter):
    cdef Py_ssize_t h = ix.shape[0], w = ix.shape[1]
    ua = np.array(u0, dtype=np.float64, copy=True)
    va = np.array(v0, dtype=np.float64, copy=True)
    ub = np.empty_like(ua)
    vb = np.empty_like(va)
    cdef double[:, ::1] u = ua, v = va, un = ub, vn = vb, tmp
    cdef Py_ssize_t i, j, im, ip, jm, jp, n
    cdef double ubar, vbar, num, den
    with nogil:
        for n in range(n_iter):
            for i in range(h):
                im = i - 1 if i > 0 else 0
                ip = i + 1 if i + 1 < h else h - 1
                for j in range(w):
                    jm = j - 1 if j > 0 else 0
                    jp = j + 1 if j + 1 < w else w - 1
                    ubar = ((u[im, j] + u[ip, j] + u[i, jm] + u[i, jp]) / 6.0
                            + (u[im, jm] + u[im, jp] + u[ip, jm] + u[ip, jp]) / 12.0)
                    vbar = ((v[im, j] + v[ip, j] + v[i, jm] + v[i, jp]) / 6.0
                            + (v[im, jm] + v[im, jp] + v[ip, jm] + v[ip, jp]) / 12.0)
                    den = alpha2 + ix[i, j] * ix[i, j] + iy[i, j] * iy[i, j]
                    num = ix[i, j] * (ubar - u0[i, j]) + iy[i, j] * (vbar - v0[i, j]) + it[i, j]
                    un[i, j] = ubar - ix[i, j] * num / den
                    vn[i, j] = vbar - iy[i, j] * num / den
            tmp = u
            u = un
            un = tmp
            tmp = v
            v = vn
            vn = tmp
    return np.asarray(u).copy(), np.asarray(v).copy()
