"""Depth-aware flow projection.

A source flow (``F_0->1`` with depth ``D_0``, or ``F_1->0`` with ``D_1``) is
scattered to time ``t``: every source pixel ``y`` lands on
``x = round(y + s * F(y))`` and contributes with weight ``1 / D(y)``, where
``s = t`` towards frame 0 and ``s = 1 - t`` towards frame 1. The projected
flow at a covered ``x`` is ``-s`` times the inverse-depth weighted mean of the
flows that landed there, so nearer content wins where motion paths collide.

Targets outside the frame are dropped. Uncovered pixels are filled by
:func:`fill_holes`.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import floor

import numpy as np

from . import _backend
from .core import as_depth, as_flow, round_half_away
from .errors import ConfigError, DegenerateInputError, ShapeError

TO_FRAME0 = "to_frame0"
TO_FRAME1 = "to_frame1"


@dataclass(frozen=True)
class ProjectionResult:
    """Projected flow before hole filling.

    ``flow`` is zero where ``coverage`` is False; ``weight_sum`` is the
    accumulated inverse depth and is positive exactly on covered pixels.
    """

    flow: np.ndarray
    coverage: np.ndarray
    weight_sum: np.ndarray
    scale: float


def _scale_for(t, direction):
    if not 0.0 <= t <= 1.0:
        raise ConfigError(f"t must lie in [0, 1], got {t}")
    if direction == TO_FRAME0:
        return float(t)
    if direction == TO_FRAME1:
        return 1.0 - float(t)
    raise ConfigError(f"direction must be {TO_FRAME0!r} or {TO_FRAME1!r}, got {direction!r}")


def _validate(src_flow, src_depth):
    flow = as_flow(src_flow)
    if np.shape(src_depth) != flow.shape[:2]:
        raise ShapeError(f"depth shape {np.shape(src_depth)} does not match flow {flow.shape[:2]}")
    depth = as_depth(src_depth)
    return flow, depth


def project_flow(src_flow, src_depth, t: float, direction: str = TO_FRAME0, *, backend=None) -> ProjectionResult:
    """Scatter ``src_flow`` to time ``t`` with inverse-depth weighting.

    Args:
        src_flow: ``F_0->1`` for ``direction="to_frame0"``, ``F_1->0`` for
            ``"to_frame1"``.
        src_depth: depth of the source frame, strictly positive.
        t: interpolation time in [0, 1].
        direction: which intermediate flow to produce.
        backend: ``"cython"``/``"python"`` to force a kernel implementation.
    """
    scale = _scale_for(t, direction)
    flow, depth = _validate(src_flow, src_depth)
    num, wsum, count = _backend.get(backend).project_scatter(flow, depth, scale)
    num = np.asarray(num)
    wsum = np.asarray(wsum)
    coverage = np.asarray(count) > 0
    out = np.zeros_like(num)
    safe = np.where(coverage, wsum, 1.0)
    out[..., 0] = np.where(coverage, -scale * (num[..., 0] / safe), 0.0)
    out[..., 1] = np.where(coverage, -scale * (num[..., 1] / safe), 0.0)
    return ProjectionResult(flow=out, coverage=coverage, weight_sum=wsum, scale=scale)


# --------------------------------------------------------------- hole filling


def _covered_neighbours(mask):
    """Count of True 4-neighbours (out-of-frame counts as uncovered)."""
    p = np.pad(mask.astype(np.int64), 1)
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]


def _neighbour_sum(values):
    """Sum over 4-neighbours of an (H, W, C) array, zero outside the frame."""
    p = np.pad(values, ((1, 1), (1, 1), (0, 0)))
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:]


def _neighbour_spread(values):
    """Adjoint of :func:`_neighbour_sum`."""
    return _neighbour_sum(values)


def diffusion_schedule(coverage):
    """Per-pass (newly filled mask, covered-neighbour count, coverage before pass)."""
    covered = np.asarray(coverage, dtype=bool).copy()
    if not covered.any():
        raise DegenerateInputError("cannot fill holes: no covered pixels")
    passes = []
    while not covered.all():
        nbrs = _covered_neighbours(covered)
        filled = ~covered & (nbrs > 0)
        passes.append((filled, nbrs, covered.copy()))
        covered = covered | filled
    return passes


def fill_holes(result: ProjectionResult, schedule=None) -> np.ndarray:
    """Fill uncovered pixels by outside-in 4-neighbour diffusion.

    Each pass reads only the previous pass's coverage: every uncovered pixel
    with at least one covered neighbour takes their mean. Covered pixels are
    never modified.
    """
    if schedule is None:
        schedule = diffusion_schedule(result.coverage)
    flow = np.array(result.flow, dtype=np.float64, copy=True)
    flow[~result.coverage] = 0.0
    for filled, nbrs, covered in schedule:
        sums = _neighbour_sum(np.where(covered[..., None], flow, 0.0))
        cnt = np.where(filled, nbrs, 1)[..., None]
        flow = np.where(filled[..., None], sums / cnt, flow)
    return flow


def _fill_holes_vjp(coverage, schedule, upstream):
    """Pull a cotangent on the filled flow back onto the covered pixels."""
    g = np.array(upstream, dtype=np.float64, copy=True)
    for filled, nbrs, covered in reversed(schedule):
        share = np.where(filled[..., None], g / np.where(filled, nbrs, 1)[..., None], 0.0)
        g = np.where(filled[..., None], 0.0, g)
        g = g + np.where(covered[..., None], _neighbour_spread(share), 0.0)
    return np.where(coverage[..., None], g, 0.0)


def project_and_fill(src_flow, src_depth, t, direction=TO_FRAME0, *, backend=None):
    """Projection followed by hole filling; returns ``(filled_flow, result)``."""
    result = project_flow(src_flow, src_depth, t, direction, backend=backend)
    return fill_holes(result), result


def project_flow_vjp(src_flow, src_depth, t, direction, upstream, *, backend=None):
    """Vector-Jacobian product of ``fill_holes(project_flow(...))``.

    Landing positions are held fixed (``round`` is piecewise constant), so
    gradients flow only through the weighted averages and the hole-filling
    chain.

    Returns:
        ``(d_src_flow, d_src_depth)`` with shapes ``(H, W, 2)`` and ``(H, W)``.
    """
    scale = _scale_for(t, direction)
    flow, depth = _validate(src_flow, src_depth)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != flow.shape:
        raise ShapeError(f"upstream shape {upstream.shape} does not match flow {flow.shape}")
    num, wsum, count = _backend.get(backend).project_scatter(flow, depth, scale)
    coverage = np.asarray(count) > 0
    wsum = np.asarray(wsum)
    mean = np.asarray(num) / np.where(coverage, wsum, 1.0)[..., None]
    g_out = _fill_holes_vjp(coverage, diffusion_schedule(coverage), upstream)

    h, w = depth.shape
    rows, cols = np.mgrid[0:h, 0:w]
    tx = round_half_away(cols + scale * flow[..., 0]).astype(np.int64)
    ty = round_half_away(rows + scale * flow[..., 1]).astype(np.int64)
    inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    tyc = np.where(inside, ty, 0)
    txc = np.where(inside, tx, 0)

    # d out(x) / d F(y) = -s w_y / W(x);  d out(x) / d w_y = -s (F(y) - mean(x)) / W(x)
    inv_wsum = np.where(inside, 1.0 / np.where(inside, wsum[tyc, txc], 1.0), 0.0)
    g_t = g_out[tyc, txc]
    wt = 1.0 / depth
    d_flow = (-scale * wt * inv_wsum)[..., None] * g_t
    d_w = -scale * np.sum((flow - mean[tyc, txc]) * g_t, axis=-1) * inv_wsum
    d_depth = d_w * (-1.0 / depth**2)
    return d_flow, d_depth


# --------------------------------------------------------------------- oracle


def _round_exact(value: float) -> int:
    """Round half away from zero on the exact binary value of ``value``."""
    q = Fraction(value)
    n = floor(abs(q) + Fraction(1, 2))
    return n if q >= 0 else -n


def project_flow_oracle(src_flow, src_depth, t, direction=TO_FRAME0) -> ProjectionResult:
    """Literal reference evaluation, for tests on small grids (<= 64 x 64).

    For every target pixel all source pixels are enumerated in row-major
    order, the landing rule is tested, and the weighted mean is accumulated
    sequentially.
    """
    scale = _scale_for(t, direction)
    flow, depth = _validate(src_flow, src_depth)
    h, w = depth.shape
    if h > 64 or w > 64:
        raise ShapeError("oracle is limited to grids of at most 64 x 64")
    land_x = np.empty((h, w), dtype=np.int64)
    land_y = np.empty((h, w), dtype=np.int64)
    for i in range(h):
        for j in range(w):
            land_x[i, j] = _round_exact(j + scale * float(flow[i, j, 0]))
            land_y[i, j] = _round_exact(i + scale * float(flow[i, j, 1]))
    out = np.zeros((h, w, 2))
    wsum = np.zeros((h, w))
    coverage = np.zeros((h, w), dtype=bool)
    for xi in range(h):
        for xj in range(w):
            members = np.flatnonzero((land_y == xi) & (land_x == xj))
            if members.size == 0:
                continue
            acc_w = acc_u = acc_v = 0.0
            for idx in members:
                i, j = divmod(int(idx), w)
                wt = 1.0 / float(depth[i, j])
                acc_w += wt
                acc_u += wt * float(flow[i, j, 0])
                acc_v += wt * float(flow[i, j, 1])
            coverage[xi, xj] = True
            wsum[xi, xj] = acc_w
            out[xi, xj, 0] = -scale * (acc_u / acc_w)
            out[xi, xj, 1] = -scale * (acc_v / acc_w)
    return ProjectionResult(flow=out, coverage=coverage, weight_sum=wsum, scale=scale)
