"""End-to-end interpolation: flow and depth estimation, depth-aware projection
to time t, adaptive warping of both inputs, and a time-weighted blend.

Also hosts the key-value configuration file format and a small gradient
descent fit of the two blend parameters against the training loss.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import as_image, check_same_shape, save_frame, write_depth, write_flow
from .errors import ConfigError, NumericError
from .estimators import DepthProvider, FlowEstimatorConfig, estimate_flow, provide_depth
from .loss import FeatureExtractor, LossWeights, total_loss_and_grad
from .projection import TO_FRAME0, TO_FRAME1, ProjectionResult, fill_holes, project_flow
from .warping import (
    DEFAULT_KERNEL_SIZE,
    adaptive_warp,
    adaptive_warp_vjp,
    blend,
    delta_kernels,
    gaussian_tap_weights,
    gaussian_tap_weights_grad,
    uniform_kernels,
)

logger = logging.getLogger(__name__)

KERNEL_MODES = ("delta", "uniform")


@dataclass(frozen=True)
class PipelineConfig:
    t_values: tuple = (0.5,)
    flow: FlowEstimatorConfig = field(default_factory=FlowEstimatorConfig)
    depth: DepthProvider = field(default_factory=DepthProvider)
    kernel_mode: str = "delta"
    kernel_size: int = DEFAULT_KERNEL_SIZE
    loss: LossWeights = field(default_factory=LossWeights)
    feature: str = "sobel_magnitude"
    threads: int = 1

    def __post_init__(self):
        ts = tuple(float(t) for t in self.t_values)
        if not ts:
            raise ConfigError("t_values must not be empty")
        for t in ts:
            if not 0.0 < t < 1.0:
                raise ConfigError(f"every t must lie strictly inside (0, 1), got {t}")
        object.__setattr__(self, "t_values", ts)
        if self.kernel_mode not in KERNEL_MODES:
            raise ConfigError(f"kernel_mode must be one of {KERNEL_MODES}, got {self.kernel_mode!r}")
        if self.kernel_size < 2 or self.kernel_size % 2:
            raise ConfigError("kernel_size must be even and >= 2")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        FeatureExtractor(self.feature)


@dataclass(frozen=True)
class BlendParams:
    """Free parameters standing in for the synthesis network.

    ``bias`` shifts the blend weight of frame 1 in logit space (0 keeps the
    plain ``(1 - t, t)`` blend); ``sharpness`` sets Gaussian kernel taps
    ``exp(-sharpness * |r|^2)``.
    """

    bias: float = 0.0
    sharpness: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.bias) and math.isfinite(self.sharpness)):
            raise ConfigError("blend parameters must be finite")


# ------------------------------------------------------------- config files

_CONFIG_KEYS = {
    "t": "t_values",
    "kernel_mode": "kernel_mode",
    "kernel_size": "kernel_size",
    "threads": "threads",
    "depth": "depth",
    "feature": "feature",
    "flow.levels": "pyramid_levels",
    "flow.iterations": "iterations_per_level",
    "flow.alpha": "alpha",
    "flow.downscale": "downscale_factor",
    "flow.presmooth": "presmooth_sigma",
    "loss.lambda1": "reconstruction",
    "loss.lambda2": "structure",
    "loss.epsilon": "epsilon",
}


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse ``key = value`` lines ('#' starts a comment) over ``base``."""
    base = base or PipelineConfig()
    top, flow, loss = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _CONFIG_KEYS:
            raise ConfigError(f"config line {lineno}: unknown or malformed entry {raw.strip()!r}")
        name = _CONFIG_KEYS[key]
        try:
            if key == "t":
                top[name] = tuple(float(v) for v in value.split(","))
            elif key == "depth":
                top[name] = DepthProvider.parse(value)
            elif key in ("kernel_mode", "feature"):
                top[name] = value
            elif key in ("kernel_size", "threads"):
                top[name] = int(value)
            elif key.startswith("flow."):
                flow[name] = int(value) if name in ("pyramid_levels", "iterations_per_level") else float(value)
            else:
                loss[name] = float(value)
        except ValueError:
            raise ConfigError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return replace(base, flow=replace(base.flow, **flow), loss=replace(base.loss, **loss), **top)


def load_config(path, base: PipelineConfig | None = None) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base)


def format_config(cfg: PipelineConfig) -> str:
    f, l = cfg.flow, cfg.loss
    lines = [
        "t = " + ",".join(repr(t) for t in cfg.t_values),
        f"kernel_mode = {cfg.kernel_mode}",
        f"kernel_size = {cfg.kernel_size}",
        f"threads = {cfg.threads}",
        f"depth = {cfg.depth}",
        f"feature = {cfg.feature}",
        f"flow.levels = {f.pyramid_levels}",
        f"flow.iterations = {f.iterations_per_level}",
        f"flow.alpha = {f.alpha!r}",
        f"flow.downscale = {f.downscale_factor!r}",
        f"flow.presmooth = {f.presmooth_sigma!r}",
        f"loss.lambda1 = {l.reconstruction!r}",
        f"loss.lambda2 = {l.structure!r}",
        f"loss.epsilon = {l.epsilon!r}",
    ]
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------ interpolation


@dataclass
class Diagnostics:
    flow_01: np.ndarray
    flow_10: np.ndarray
    depth_0: np.ndarray
    depth_1: np.ndarray
    projection_t0: ProjectionResult
    projection_t1: ProjectionResult
    flow_t0: np.ndarray
    flow_t1: np.ndarray
    warped_0: np.ndarray
    warped_1: np.ndarray
    blend_weight: float

    def dump(self, out_dir, stem="interp"):
        """Write flows (.flo), depth (.flo container), coverage and warped frames (.pgm)."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_flow(self.flow_01, out / f"{stem}_flow_01.flo")
        write_flow(self.flow_10, out / f"{stem}_flow_10.flo")
        write_flow(self.flow_t0, out / f"{stem}_flow_t0.flo")
        write_flow(self.flow_t1, out / f"{stem}_flow_t1.flo")
        write_depth(self.depth_0, out / f"{stem}_depth_0.flo")
        write_depth(self.depth_1, out / f"{stem}_depth_1.flo")
        save_frame(self.projection_t0.coverage.astype(float), out / f"{stem}_coverage_t0.pgm")
        save_frame(self.projection_t1.coverage.astype(float), out / f"{stem}_coverage_t1.pgm")
        save_frame(np.clip(self.warped_0, 0, 1), out / f"{stem}_warped_0.pgm")
        save_frame(np.clip(self.warped_1, 0, 1), out / f"{stem}_warped_1.pgm")


def blend_weight(t: float, bias: float = 0.0) -> float:
    """Weight of frame 1: ``t`` itself when ``bias == 0``, else sigmoid(logit(t) + bias)."""
    if bias == 0.0:
        return t
    z = math.log(t / (1.0 - t)) + bias
    return 1.0 / (1.0 + math.exp(-z))


def make_kernels(shape, cfg: PipelineConfig, params: BlendParams | None = None):
    k = cfg.kernel_size
    if params is not None:
        return np.broadcast_to(gaussian_tap_weights(params.sharpness, k), (*shape, k * k))
    if cfg.kernel_mode == "uniform":
        return uniform_kernels(shape, k)
    return delta_kernels(shape, k)


def intermediate_flows(flow_01, flow_10, depth_0, depth_1, t):
    """Projected and hole-filled ``F_t->0`` and ``F_t->1``."""
    p0 = project_flow(flow_01, depth_0, t, TO_FRAME0)
    p1 = project_flow(flow_10, depth_1, t, TO_FRAME1)
    return fill_holes(p0), fill_holes(p1), p0, p1


def interpolate(
    frame0,
    frame1,
    t: float,
    cfg: PipelineConfig | None = None,
    *,
    flows=None,
    depths=None,
    frame_ids=(None, None),
    synthetic_depths=None,
    residual=None,
    params: BlendParams | None = None,
):
    """Synthesize the frame at time ``t`` between ``frame0`` and ``frame1``.

    Args:
        flows: optional ``(F_0->1, F_1->0)`` to bypass the flow estimator
            (e.g. ground truth).
        depths: optional ``(D_0, D_1)`` to bypass the depth provider.
        frame_ids: identifiers used by file/synthetic depth providers.
        residual: optional additive correction applied before clamping.
        params: blend parameters; ``None`` means a plain ``(1 - t, t)``
            blend with the configured kernel mode.

    Returns:
        ``(frame, diagnostics)``
    """
    cfg = cfg or PipelineConfig()
    if not 0.0 < t < 1.0:
        raise ConfigError(f"t must lie strictly inside (0, 1), got {t}")
    frame0 = as_image(frame0)
    frame1 = as_image(frame1)
    check_same_shape(frame0, frame1, names=("frame0", "frame1"))
    if flows is None:
        flow_01 = estimate_flow(frame0, frame1, cfg.flow)
        flow_10 = estimate_flow(frame1, frame0, cfg.flow)
    else:
        flow_01, flow_10 = flows
    if depths is None:
        depth_0 = provide_depth(cfg.depth, frame0, frame_id=frame_ids[0], synthetic=synthetic_depths)
        depth_1 = provide_depth(cfg.depth, frame1, frame_id=frame_ids[1], synthetic=synthetic_depths)
    else:
        depth_0, depth_1 = depths
    flow_t0, flow_t1, p0, p1 = intermediate_flows(flow_01, flow_10, depth_0, depth_1, t)
    kernels = make_kernels(frame0.shape, cfg, params)
    warped_0 = adaptive_warp(frame0, flow_t0, kernels)
    warped_1 = adaptive_warp(frame1, flow_t1, kernels)
    w1 = blend_weight(t, params.bias if params is not None else 0.0)
    out = blend(warped_0, warped_1, w1, residual)
    diag = Diagnostics(flow_01, flow_10, depth_0, depth_1, p0, p1, flow_t0, flow_t1, warped_0, warped_1, w1)
    return out, diag


# --------------------------------------------------------------- parameter fit


def _fit_objective(cases, params: BlendParams, cfg: PipelineConfig, phi):
    """Mean loss over cases and its gradient w.r.t. (bias, sharpness)."""
    k = cfg.kernel_size
    taps = gaussian_tap_weights(params.sharpness, k)
    dtaps = gaussian_tap_weights_grad(params.sharpness, k)
    total = 0.0
    g_bias = 0.0
    g_sharp = 0.0
    for prev, nxt, gt, flow_t0, flow_t1, t in cases:
        kernels = np.broadcast_to(taps, (*prev.shape, k * k))
        w0 = adaptive_warp(prev, flow_t0, kernels, validate=False)
        w1 = adaptive_warp(nxt, flow_t1, kernels, validate=False)
        b = blend_weight(t, params.bias)
        raw = (1.0 - b) * w0 + b * w1
        pred = np.clip(raw, 0.0, 1.0)
        report, g_pred = total_loss_and_grad(pred, gt, cfg.loss, phi)
        g_raw = np.where((raw > 0.0) & (raw < 1.0), g_pred, 0.0)
        total += report.total
        g_bias += float(np.sum(g_raw * (w1 - w0))) * b * (1.0 - b)
        _, _, dk0 = adaptive_warp_vjp(prev, flow_t0, kernels, (1.0 - b) * g_raw, validate=False)
        _, _, dk1 = adaptive_warp_vjp(nxt, flow_t1, kernels, b * g_raw, validate=False)
        g_sharp += float(np.dot((dk0 + dk1).sum(axis=(0, 1)), dtaps))
    n = len(cases)
    return total / n, np.array([g_bias / n, g_sharp / n])


def prepare_fit_cases(triplets, cfg: PipelineConfig, *, flows=None, depths=None, t=0.5):
    """Precompute projected flows for each triplet (flows stay fixed during the fit)."""
    cases = []
    for n, trip in enumerate(triplets):
        if flows is None:
            f01 = estimate_flow(trip.prev, trip.next, cfg.flow)
            f10 = estimate_flow(trip.next, trip.prev, cfg.flow)
        else:
            f01, f10 = flows[n]
        if depths is None:
            d0 = provide_depth(cfg.depth, trip.prev)
            d1 = provide_depth(cfg.depth, trip.next)
        else:
            d0, d1 = depths[n]
        ft0, ft1, _, _ = intermediate_flows(f01, f10, d0, d1, t)
        cases.append((trip.prev, trip.next, trip.mid, ft0, ft1, t))
    return cases


def fit_blend_params(
    triplets,
    cfg: PipelineConfig | None = None,
    init: BlendParams | None = None,
    steps: int = 100,
    lr: float = 1e-3,
    *,
    flows=None,
    depths=None,
    history: list | None = None,
) -> BlendParams:
    """Gradient descent on the mean training loss over ``triplets``.

    The step size halves every ``ceil(steps / 5)`` steps. The best
    parameters seen (initial point included) are returned, so the final loss
    never exceeds the initial one. If ``history`` is given, the loss at
    every evaluated point is appended to it.

    Raises:
        NumericError: the loss became non-finite; ``.step`` holds the step.
    """
    cfg = cfg or PipelineConfig()
    init = init or BlendParams()
    if not triplets:
        raise ConfigError("need at least one triplet")
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    if not (lr >= 0 and math.isfinite(lr)):
        raise ConfigError("learning rate must be finite and >= 0")
    phi = FeatureExtractor(cfg.feature)
    cases = prepare_fit_cases(triplets, cfg, flows=flows, depths=depths)
    decay_every = math.ceil(steps / 5)
    theta = np.array([init.bias, init.sharpness], dtype=np.float64)
    best_loss, best = math.inf, init
    for step in range(steps + 1):
        params = BlendParams(float(theta[0]), float(theta[1])) if step else init
        loss, grad = _fit_objective(cases, params, cfg, phi)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise NumericError(f"non-finite loss at step {step}", step=step)
        if history is not None:
            history.append(loss)
        if loss < best_loss:
            best_loss, best = loss, params
        if step == steps:
            break
        rate = lr * 0.5 ** (step // decay_every)
        theta = theta - rate * grad
        if not np.all(np.isfinite(theta)):
            raise NumericError(f"parameters diverged at step {step}", step=step)
        logger.debug("step %d loss %.6g grad %s", step, loss, grad)
    return best
