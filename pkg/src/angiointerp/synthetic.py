"""Angiography-like phantom with exact ground truth.

A vessel tree is drawn once in reference coordinates. At time ``tau`` (in
frame units) a reference point ``p`` is displayed at

    x(tau) = p + A * w(2 pi tau / P) * d(p)

where ``d`` is a smooth outward field (|d| <= ~1 inside the frame) and
``w(theta) = sin(theta) + skew * cos(2 theta)``. The skew term keeps the
extrema of ``w`` at the extrema of ``sin`` but makes the end-systolic turn
sharper than the end-diastolic one. ``skew = 0`` gives a pure sinusoid.

Contrast fills the tree from its root: a vessel point at arc length ``s``
is opaque once ``contrast_speed * tau`` has passed ``s``. Every frame,
half-frame and flow is evaluated from this continuous model, so the flow
between any two times is known exactly.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .core import make_rng, round_half_away, save_frame, write_depth, write_flow
from .errors import ConfigError

SYSTOLE = "systole"
DIASTOLE = "diastole"
TRANSITION = "transition"

_INVERSE_ITERATIONS = 60
_FILL_RAMP = 6.0


@dataclass(frozen=True)
class PhantomConfig:
    seed: int = 0
    size: tuple[int, int] = (256, 256)
    n_branches: int = 6
    vessel_width: float = 4.0
    cycle_period: float = 12.0
    motion_amplitude: float = 4.0
    contrast_speed: float = 40.0
    n_frames: int = 36
    waveform_skew: float = 0.15
    background: float = 0.75
    contrast: float = 0.45

    def __post_init__(self):
        object.__setattr__(self, "size", tuple(int(s) for s in self.size))
        if len(self.size) != 2 or min(self.size) < 16:
            raise ConfigError(f"size must be (H, W) with both >= 16, got {self.size}")
        if self.cycle_period < 4:
            raise ConfigError("cycle_period must be >= 4")
        if self.motion_amplitude < 0:
            raise ConfigError("motion_amplitude must be >= 0")
        if self.n_frames < 3:
            raise ConfigError("n_frames must be >= 3")
        if self.n_branches < 0:
            raise ConfigError("n_branches must be >= 0")
        if not self.vessel_width > 0:
            raise ConfigError("vessel_width must be > 0")
        if not self.contrast_speed > 0:
            raise ConfigError("contrast_speed must be > 0")
        if not abs(self.waveform_skew) < 0.25:
            raise ConfigError("|waveform_skew| must be < 0.25 to keep two extrema per cycle")
        if not (0 < self.contrast < self.background <= 1):
            raise ConfigError("need 0 < contrast < background <= 1")


# ------------------------------------------------------------------ geometry


def _smooth_curve(rng, start, heading, length, spacing=0.25):
    """Polyline with a slowly varying heading."""
    n = max(int(length / spacing), 2)
    s = np.arange(n) * spacing
    wiggle = np.zeros(n)
    for _ in range(2):
        wavelength = rng.uniform(0.6, 1.5) * length
        wiggle += rng.uniform(0.15, 0.35) * np.sin(2 * np.pi * s / wavelength + rng.uniform(0, 2 * np.pi))
    theta = heading + wiggle - wiggle[0]
    steps = np.stack([np.cos(theta), np.sin(theta)], axis=1) * spacing
    pts = start + np.concatenate([[[0.0, 0.0]], np.cumsum(steps[:-1], axis=0)])
    return pts, s


@dataclass
class _Vessel:
    points: np.ndarray  # (n, 2) as (x, y)
    arc: np.ndarray  # arc length from the tree root


def _build_tree(cfg: PhantomConfig):
    rng = make_rng(cfg.seed, 0)
    h, w = cfg.size
    root = np.array([rng.uniform(0.35, 0.65) * w, 0.06 * h])
    pts, s = _smooth_curve(rng, root, np.pi / 2 + rng.uniform(-0.3, 0.3), 0.95 * h)
    vessels = [_Vessel(pts, s)]
    for _ in range(cfg.n_branches):
        parent = vessels[int(rng.integers(len(vessels)))]
        n = len(parent.points)
        idx = int(rng.uniform(0.15, 0.75) * n)
        tangent = parent.points[min(idx + 1, n - 1)] - parent.points[max(idx - 1, 0)]
        heading = np.arctan2(tangent[1], tangent[0]) + rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
        length = rng.uniform(0.35, 0.7) * (parent.arc[-1] - parent.arc[idx])
        bpts, bs = _smooth_curve(rng, parent.points[idx], heading, max(length, 20.0))
        vessels.append(_Vessel(bpts, parent.arc[idx] + bs))
    return vessels


# --------------------------------------------------------------------- model


class PhantomModel:
    """Continuous phantom; every query is exact up to floating point."""

    def __init__(self, cfg: PhantomConfig):
        self.cfg = cfg
        h, w = cfg.size
        self.vessels = _build_tree(cfg)
        points = np.concatenate([v.points for v in self.vessels])
        self._arc = np.concatenate([v.arc for v in self.vessels])
        self._tree = cKDTree(points)
        self.max_arc = float(self._arc.max())
        self._sigma = cfg.vessel_width / 2.0
        rng = make_rng(cfg.seed, 1)
        self.center = np.array([rng.uniform(0.4, 0.6) * w, rng.uniform(0.45, 0.65) * h])
        corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=float)
        self._radius = float(np.max(np.linalg.norm(corners - self.center, axis=1)))
        self._wobble_k = 2 * np.pi / (rng.uniform(0.8, 1.2) * max(h, w))
        self._wobble_phase = rng.uniform(0, 2 * np.pi, size=2)
        self._bg_waves = [
            (
                rng.uniform(0.02, 0.04),
                2 * np.pi / rng.uniform(40, 110) * np.array([np.cos(a), np.sin(a)]),
                rng.uniform(0, 2 * np.pi),
            )
            for a in rng.uniform(0, np.pi, size=4)
        ]
        self._grid = np.stack(np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float)), axis=-1)
        self._cache = {}
        self._cache_size = 6

    # motion -----------------------------------------------------------------

    def waveform(self, tau):
        theta = 2 * np.pi * np.asarray(tau, dtype=float) / self.cfg.cycle_period
        return np.sin(theta) + self.cfg.waveform_skew * np.cos(2 * theta)

    def displacement(self, tau) -> float:
        return float(self.cfg.motion_amplitude * self.waveform(tau))

    def direction(self, p):
        """Smooth outward direction field, (..., 2) -> (..., 2)."""
        radial = (p - self.center) / self._radius
        k, (ph0, ph1) = self._wobble_k, self._wobble_phase
        wob = np.stack(
            [np.sin(k * p[..., 1] + ph0), np.cos(k * p[..., 0] + ph1)],
            axis=-1,
        )
        return radial + 0.25 * wob

    def _state(self, tau):
        """Cached (reference points, vessel profile, arc length) for ``tau``."""
        key = float(tau)
        cached = self._cache.get(key)
        if cached is None:
            p = self._invert(self.displacement(tau))
            cached = (p, *self._vessel_fields(p))
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = cached
        return cached

    def _invert(self, a):
        x = self._grid
        if a == 0.0:
            return x.copy()
        p = x - a * self.direction(x)
        for _ in range(_INVERSE_ITERATIONS):
            nxt = x - a * self.direction(p)
            done = np.max(np.abs(nxt - p)) < 1e-12
            p = nxt
            if done:
                break
        return p

    def reference_points(self, tau):
        """Reference coordinates of every pixel of the frame at ``tau``."""
        return self._state(tau)[0]

    def flow(self, tau_a, tau_b):
        """Exact flow from frame ``tau_a`` to frame ``tau_b`` on ``tau_a``'s pixels."""
        p = self.reference_points(tau_a)
        da = self.displacement(tau_b) - self.displacement(tau_a)
        return da * self.direction(p)

    # appearance -------------------------------------------------------------

    def _vessel_fields(self, p):
        flat = p.reshape(-1, 2)
        dist, idx = self._tree.query(flat, distance_upper_bound=5.0 * self._sigma)
        near = np.isfinite(dist)
        profile = np.zeros(len(flat))
        arc = np.full(len(flat), np.inf)
        profile[near] = np.exp(-(dist[near] ** 2) / (2 * self._sigma**2))
        arc[near] = self._arc[idx[near]]
        return profile.reshape(p.shape[:-1]), arc.reshape(p.shape[:-1])

    def _background(self, p):
        bg = np.full(p.shape[:-1], self.cfg.background)
        for amp, kvec, phase in self._bg_waves:
            bg += amp * np.sin(p @ kvec + phase)
        return bg

    def fill(self, arc, tau):
        front = self.cfg.contrast_speed * float(tau)
        f = np.clip((front - arc) / _FILL_RAMP + 0.5, 0.0, 1.0)
        return f * f * (3.0 - 2.0 * f)

    def render(self, tau) -> np.ndarray:
        p, profile, arc = self._state(tau)
        img = self._background(p) - self.cfg.contrast * profile * self.fill(arc, tau)
        return np.clip(img, 0.0, 1.0)

    def depth(self, tau) -> np.ndarray:
        """Relative depth: vessels sit in front of the background (1 vs 2)."""
        return 2.0 - self._state(tau)[1]

    def fill_complete_time(self) -> float:
        """First time at which every vessel point is fully opaque."""
        return (self.max_arc + _FILL_RAMP / 2) / self.cfg.contrast_speed

    def front_mask(self, tau_src, tau_dst, tol=0.5 / 255) -> np.ndarray:
        """Pixels of frame ``tau_dst`` whose contrast opacity changed since
        ``tau_src`` by more than ``tol`` in intensity. Such changes are not
        explained by motion."""
        _, profile, arc = self._state(tau_dst)
        change = self.cfg.contrast * profile * np.abs(self.fill(arc, tau_dst) - self.fill(arc, tau_src))
        return change > tol

    def occlusion_mask(self, tau_src, tau_dst) -> np.ndarray:
        """Pixels of frame ``tau_dst`` that are hit more than once when frame
        ``tau_src`` is forward-splatted, or whose content lies outside frame
        ``tau_src``."""
        h, w = self.cfg.size
        f = self.flow(tau_src, tau_dst)
        tx = round_half_away(self._grid[..., 0] + f[..., 0]).astype(np.int64)
        ty = round_half_away(self._grid[..., 1] + f[..., 1]).astype(np.int64)
        inside = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
        hits = np.bincount((ty * w + tx)[inside], minlength=h * w).reshape(h, w)
        back = self.flow(tau_dst, tau_src)
        sx = self._grid[..., 0] + back[..., 0]
        sy = self._grid[..., 1] + back[..., 1]
        outside = (sx < 0) | (sx > w - 1) | (sy < 0) | (sy > h - 1)
        return (hits > 1) | outside

    def interpolation_mask(self, tau_a, tau_b, tau_mid) -> np.ndarray:
        """Disocclusion mask for predicting ``tau_mid`` from ``tau_a`` and ``tau_b``."""
        return self.occlusion_mask(tau_a, tau_mid) | self.occlusion_mask(tau_b, tau_mid)


# ---------------------------------------------------------------------- clip


@dataclass
class SyntheticClip:
    """Rendered phantom sequence.

    ``frames[n]`` is at time n, ``half_frames[n]`` at n + 0.5. ``flows_fwd[n]``
    maps frame n to n + 1, ``flows_bwd[n]`` frame n + 1 to n. ``masks[n]`` is
    the occlusion mask of the pair in frame n + 1's coordinates,
    ``half_masks[n]`` the disocclusion mask for predicting the half frame and
    ``front_masks[n]`` where contrast arrival changed frame n + 1's appearance.
    """

    config: PhantomConfig
    frames: np.ndarray
    half_frames: np.ndarray
    flows_fwd: np.ndarray
    flows_bwd: np.ndarray
    masks: np.ndarray
    half_masks: np.ndarray
    front_masks: np.ndarray
    depths: np.ndarray
    phases: list
    model: PhantomModel = field(repr=False)

    def frame_ids(self):
        return [f"{n:04d}" for n in range(len(self.frames))]

    def depth_lookup(self):
        return dict(zip(self.frame_ids(), self.depths))

    def steady_state_start(self) -> int:
        """First frame index i whose neighbour i - 1 is already fully filled
        with contrast, so leave-one-out predictions from i on see only motion."""
        return int(math.ceil(self.model.fill_complete_time())) + 1


def generate_clip(cfg: PhantomConfig) -> SyntheticClip:
    model = PhantomModel(cfg)
    n = cfg.n_frames
    h, w = cfg.size
    frames = np.empty((n, h, w))
    depths = np.empty((n, h, w))
    half = np.empty((n - 1, h, w))
    fwd = np.empty((n - 1, h, w, 2))
    bwd = np.empty((n - 1, h, w, 2))
    masks = np.empty((n - 1, h, w), dtype=bool)
    half_masks = np.empty((n - 1, h, w), dtype=bool)
    front = np.empty((n - 1, h, w), dtype=bool)
    # sequential order keeps the model's small per-time cache warm
    for k in range(n):
        frames[k] = model.render(k)
        depths[k] = model.depth(k)
        if k == 0:
            continue
        j = k - 1
        half[j] = model.render(j + 0.5)
        fwd[j] = model.flow(j, k)
        bwd[j] = model.flow(k, j)
        masks[j] = model.occlusion_mask(j, k)
        half_masks[j] = model.interpolation_mask(j, k, j + 0.5)
        front[j] = model.front_mask(j, k)
    return SyntheticClip(cfg, frames, half, fwd, bwd, masks, half_masks, front, depths, phase_labels(cfg), model)


def phase_labels(cfg: PhantomConfig) -> list[str]:
    """Cardiac phase per integer frame.

    Frames within one frame of a displacement extremum are ``transition``.
    Otherwise the displacement is falling (``systole``, contraction) or
    rising (``diastole``). A static phantom is all ``diastole``.
    """
    if cfg.motion_amplitude == 0:
        return [DIASTOLE] * cfg.n_frames
    period = cfg.cycle_period
    labels = []
    for n in range(cfg.n_frames):
        # extrema sit at P/4 + k P/2
        k = np.round((n - period / 4) / (period / 2))
        nearest = min(abs(n - (period / 4 + j * period / 2)) for j in (k - 1, k, k + 1))
        if nearest <= 1.0 + 1e-9:
            labels.append(TRANSITION)
            continue
        theta = (2 * np.pi * n / period) % (2 * np.pi)
        labels.append(SYSTOLE if np.pi / 2 < theta < 3 * np.pi / 2 else DIASTOLE)
    return labels


def write_clip(clip: SyntheticClip, out_dir) -> Path:
    """Write frames, half frames, true flows, masks, depth and a manifest."""
    out = Path(out_dir)
    for sub in ("frames", "half", "flows", "masks", "depth"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    for name, frame, depth in zip(clip.frame_ids(), clip.frames, clip.depths):
        save_frame(frame, out / "frames" / f"{name}.pgm")
        write_depth(depth, out / "depth" / f"{name}.flo")
    for k in range(len(clip.half_frames)):
        save_frame(clip.half_frames[k], out / "half" / f"{k:04d}.pgm")
        write_flow(clip.flows_fwd[k], out / "flows" / f"fwd_{k:04d}.flo")
        write_flow(clip.flows_bwd[k], out / "flows" / f"bwd_{k:04d}.flo")
        save_frame(clip.masks[k].astype(float), out / "masks" / f"{k:04d}.pgm")
    lines = [f"{key}={_fmt(value)}" for key, value in asdict(clip.config).items()]
    lines.append("phases=" + ",".join(clip.phases))
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return out


def _fmt(value):
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)
