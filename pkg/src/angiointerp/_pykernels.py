"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Used when the extension is not built, or when ``ANGIOINTERP_PURE_PYTHON=1``.
Scatter sums use ``np.bincount``, which accumulates in input order, so the
row-major source order of the projection scatter is preserved.
"""
import numpy as np

from .core import round_half_away


def project_scatter(flow, depth, scale):
    h, w = depth.shape
    rows, cols = np.mgrid[0:h, 0:w]
    u = flow[..., 0]
    v = flow[..., 1]
    tx = round_half_away(cols + scale * u).astype(np.int64)
    ty = round_half_away(rows + scale * v).astype(np.int64)
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    target = (ty * w + tx)[inside]
    wt = 1.0 / depth[inside]
    n = h * w
    wsum = np.bincount(target, weights=wt, minlength=n)
    num_u = np.bincount(target, weights=wt * u[inside], minlength=n)
    num_v = np.bincount(target, weights=wt * v[inside], minlength=n)
    count = np.bincount(target, minlength=n).astype(np.int64)
    num = np.stack([num_u, num_v], axis=-1).reshape(h, w, 2)
    return num, wsum.reshape(h, w), count.reshape(h, w)


def _tap_geometry(flow, k, a, b):
    h, w = flow.shape[:2]
    half = k // 2 - 1
    rows, cols = np.mgrid[0:h, 0:w]
    qx = cols + flow[..., 0] + (b - half)
    qy = rows + flow[..., 1] + (a - half)
    px = np.clip(qx, 0.0, w - 1)
    py = np.clip(qy, 0.0, h - 1)
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return qx, qy, x0, y0, x1, y1, px - x0, py - y0


def _bilinear(src, x0, y0, x1, y1, fx, fy):
    return (1.0 - fy) * ((1.0 - fx) * src[y0, x0] + fx * src[y0, x1]) + fy * (
        (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
    )


def warp_forward(src, flow, kernels, k):
    out = np.zeros(src.shape, dtype=np.float64)
    for a in range(k):
        for b in range(k):
            kw = kernels[..., a * k + b]
            if not np.any(kw):
                continue
            _, _, x0, y0, x1, y1, fx, fy = _tap_geometry(flow, k, a, b)
            val = _bilinear(src, x0, y0, x1, y1, fx, fy)
            out += np.where(kw != 0.0, kw * val, 0.0)
    return out


def warp_backward(src, flow, kernels, k, grad):
    h, w = src.shape
    d_src = np.zeros(h * w, dtype=np.float64)
    d_flow = np.zeros((h, w, 2), dtype=np.float64)
    d_ker = np.zeros((h, w, k * k), dtype=np.float64)
    for a in range(k):
        for b in range(k):
            kw = kernels[..., a * k + b]
            qx, qy, x0, y0, x1, y1, fx, fy = _tap_geometry(flow, k, a, b)
            s00, s01 = src[y0, x0], src[y0, x1]
            s10, s11 = src[y1, x0], src[y1, x1]
            d_ker[..., a * k + b] = grad * _bilinear(src, x0, y0, x1, y1, fx, fy)
            gk = grad * kw
            for yy, xx, wgt in (
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x1, (1.0 - fy) * fx),
                (y1, x0, fy * (1.0 - fx)),
                (y1, x1, fy * fx),
            ):
                d_src += np.bincount((yy * w + xx).ravel(), weights=(gk * wgt).ravel(), minlength=h * w)
            in_x = (qx >= 0.0) & (qx <= w - 1)
            in_y = (qy >= 0.0) & (qy <= h - 1)
            d_flow[..., 0] += np.where(in_x, gk * ((1.0 - fy) * (s01 - s00) + fy * (s11 - s10)), 0.0)
            d_flow[..., 1] += np.where(in_y, gk * ((1.0 - fx) * (s10 - s00) + fx * (s11 - s01)), 0.0)
    return d_src.reshape(h, w), d_flow, d_ker


def _neighbour_mean(f):
    p = np.pad(f, 1, mode="edge")
    cross = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]
    diag = p[:-2, :-2] + p[:-2, 2:] + p[2:, :-2] + p[2:, 2:]
    return cross / 6.0 + diag / 12.0


def hs_iterate(ix, iy, it, u0, v0, alpha2, n_iter):
    u = np.array(u0, dtype=np.float64, copy=True)
    v = np.array(v0, dtype=np.float64, copy=True)
    den = alpha2 + ix * ix + iy * iy
    for _ in range(n_iter):
        ubar = _neighbour_mean(u)
        vbar = _neighbour_mean(v)
        num = ix * (ubar - u0) + iy * (vbar - v0) + it
        u = ubar - ix * num / den
        v = vbar - iy * num / den
    return u, v
