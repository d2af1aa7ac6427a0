"""Adaptive warping and time-weighted blending.

The warp gathers, for every output pixel ``x``, a ``k x k`` set of bilinear
samples around the flow-displaced point ``x + flow(x)`` and mixes them with
that pixel's kernel weights. Tap offsets run from ``-k/2 + 1`` to ``k/2``
on each axis, so for ``k = 4`` the tap at offset ``(0, 0)`` sits on the
displaced point itself. Sample coordinates are clamped to the frame.
"""
from __future__ import annotations

import numpy as np

from . import _backend
from .core import as_flow, as_image, as_kernels, check_same_shape, kernel_side
from .errors import ConfigError, ShapeError

DEFAULT_KERNEL_SIZE = 4


def tap_offsets(k: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Integer offsets along one axis, e.g. ``[-1, 0, 1, 2]`` for k = 4."""
    if k < 2 or k % 2:
        raise ConfigError(f"kernel size must be even and >= 2, got {k}")
    return np.arange(k) - (k // 2 - 1)


def center_tap(k: int = DEFAULT_KERNEL_SIZE) -> int:
    c = k // 2 - 1
    return c * k + c


def delta_kernels(shape, k: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """All weight on the tap at the displaced point: plain bilinear warping."""
    ker = np.zeros((*shape, k * k))
    ker[..., center_tap(k)] = 1.0
    return ker


def uniform_kernels(shape, k: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    return np.full((*shape, k * k), 1.0 / (k * k))


def gaussian_tap_weights(sharpness: float, k: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Normalised ``exp(-sharpness * |r|^2)`` over the tap offsets ``r``.

    ``sharpness = 0`` gives the uniform kernel; large values approach the
    delta kernel.
    """
    off = tap_offsets(k)
    r2 = (off[:, None] ** 2 + off[None, :] ** 2).ravel().astype(np.float64)
    logits = -sharpness * r2
    e = np.exp(logits - logits.max())
    return e / e.sum()


def gaussian_tap_weights_grad(sharpness: float, k: int = DEFAULT_KERNEL_SIZE) -> np.ndarray:
    """Derivative of :func:`gaussian_tap_weights` with respect to sharpness."""
    off = tap_offsets(k)
    r2 = (off[:, None] ** 2 + off[None, :] ** 2).ravel().astype(np.float64)
    p = gaussian_tap_weights(sharpness, k)
    return -p * (r2 - np.dot(p, r2))


def _prepare(src, flow, kernels, validate):
    src = as_image(src) if validate else np.ascontiguousarray(src, dtype=np.float64)
    flow = as_flow(flow) if validate else np.ascontiguousarray(flow, dtype=np.float64)
    if kernels is None:
        kernels = delta_kernels(src.shape)
    if validate:
        kernels = as_kernels(kernels)
    else:
        kernels = np.ascontiguousarray(kernels, dtype=np.float64)
    check_same_shape(src, flow, kernels, names=("src", "flow", "kernels"))
    return src, flow, kernels, kernel_side(kernels)


def adaptive_warp(src, flow, kernels=None, *, validate=True, backend=None) -> np.ndarray:
    """Sample ``src`` through ``flow`` with per-pixel interpolation kernels.

    ``src`` may be any single-channel map (frame or depth). ``kernels=None``
    means the delta kernel. ``validate=False`` skips the range and
    normalisation checks; gradient checks use it to perturb kernels freely.
    """
    src, flow, kernels, k = _prepare(src, flow, kernels, validate)
    return np.asarray(_backend.get(backend).warp_forward(src, flow, kernels, k))


def adaptive_warp_vjp(src, flow, kernels, upstream, *, validate=True, backend=None):
    """Returns ``(d_src, d_flow, d_kernels)`` for the cotangent ``upstream``."""
    src, flow, kernels, k = _prepare(src, flow, kernels, validate)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if upstream.shape != src.shape:
        raise ShapeError(f"upstream shape {upstream.shape} does not match {src.shape}")
    d_src, d_flow, d_ker = _backend.get(backend).warp_backward(src, flow, kernels, k, upstream)
    return np.asarray(d_src), np.asarray(d_flow), np.asarray(d_ker)


def bilinear_warp(src, flow, *, backend=None) -> np.ndarray:
    """Backward warp ``src(x + flow(x))`` with border clamping, unvalidated range."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    return adaptive_warp(src, flow, delta_kernels(src.shape), validate=False, backend=backend)


def blend(warped0, warped1, t: float, residual=None) -> np.ndarray:
    """``clip((1 - t) * warped0 + t * warped1 + residual, 0, 1)``."""
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    w0 = np.asarray(warped0, dtype=np.float64)
    w1 = np.asarray(warped1, dtype=np.float64)
    if w0.shape != w1.shape:
        raise ShapeError(f"warped frames differ in shape: {w0.shape} vs {w1.shape}")
    out = (1.0 - t) * w0 + t * w1
    if residual is not None:
        residual = np.asarray(residual, dtype=np.float64)
        if residual.shape != out.shape:
            raise ShapeError(f"residual shape {residual.shape} does not match {out.shape}")
        out = out + residual
    return np.clip(out, 0.0, 1.0)
