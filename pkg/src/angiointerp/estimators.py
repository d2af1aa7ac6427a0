"""Flow and depth providers.

Flow comes from a coarse-to-fine Horn-Schunck solver; depth from a constant,
a file, or the synthetic generator's ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import _backend
from .core import as_depth, as_image, check_same_shape, read_depth
from .errors import ConfigError, DataError, ShapeError
from .warping import bilinear_warp

# Horn-Schunck runs on 8-bit intensity units so the smoothness weight is
# comparable with the classical literature values (alpha ~ 10).
INTENSITY_SCALE = 255.0
MIN_COARSE_SIZE = 8


@dataclass(frozen=True)
class FlowEstimatorConfig:
    """Coarse-to-fine Horn-Schunck settings.

    ``alpha`` weights the smoothness term against the brightness-constancy
    term measured in 8-bit intensity units. The default of 10 came from an
    endpoint-error sweep on the synthetic phantom (see the benchmarks
    directory); 5 to 20 all land within 0.05 px of each other there.
    """

    pyramid_levels: int = 4
    iterations_per_level: int = 100
    alpha: float = 10.0
    downscale_factor: float = 0.5
    presmooth_sigma: float = 1.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ConfigError("pyramid_levels must be >= 1")
        if self.iterations_per_level < 1:
            raise ConfigError("iterations_per_level must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        if not 0.0 < self.downscale_factor < 1.0:
            raise ConfigError("downscale_factor must lie in (0, 1)")
        if self.presmooth_sigma < 0:
            raise ConfigError("presmooth_sigma must be >= 0")


def _centre_grid(shape, scale):
    """Pixel-centre aligned coordinates: target i samples source (i + 0.5) * scale - 0.5.

    Centre alignment keeps the pyramid symmetric under image flips.
    """
    rows = (np.arange(shape[0]) + 0.5) * scale - 0.5
    cols = (np.arange(shape[1]) + 0.5) * scale - 0.5
    return np.meshgrid(rows, cols, indexing="ij")


def _resample(img, shape, factor):
    grid = _centre_grid(shape, 1.0 / factor)
    return ndimage.map_coordinates(img, grid, order=1, mode="nearest")


def _pyramid(img, levels, factor, sigma):
    out = [ndimage.gaussian_filter(img, sigma, mode="nearest") if sigma > 0 else img]
    for _ in range(levels - 1):
        prev = out[-1]
        shape = (int(np.ceil(prev.shape[0] * factor)), int(np.ceil(prev.shape[1] * factor)))
        # anti-alias before decimating
        blurred = ndimage.gaussian_filter(prev, 0.5 / factor, mode="nearest")
        out.append(_resample(blurred, shape, factor))
    return out


def _upsample_flow(flow, shape, factor):
    grid = _centre_grid(shape, factor)
    up = np.empty((*shape, 2))
    for c in range(2):
        up[..., c] = ndimage.map_coordinates(flow[..., c], grid, order=1, mode="nearest") / factor
    return up


def _gradients(img):
    gy, gx = np.gradient(img)
    return gx, gy


def estimate_flow(a, b, cfg: FlowEstimatorConfig | None = None, *, backend=None) -> np.ndarray:
    """Dense flow ``F_a->b`` such that ``a(x) ~ b(x + F(x))``."""
    cfg = cfg or FlowEstimatorConfig()
    a = as_image(a)
    b = as_image(b)
    check_same_shape(a, b, names=("a", "b"))
    h, w = a.shape
    coarse = min(h, w) * cfg.downscale_factor ** (cfg.pyramid_levels - 1)
    if coarse < MIN_COARSE_SIZE:
        raise ConfigError(
            f"{h}x{w} images are too small for {cfg.pyramid_levels} pyramid levels "
            f"(coarsest side {coarse:.1f} < {MIN_COARSE_SIZE})"
        )
    kern = _backend.get(backend)
    pa = _pyramid(a * INTENSITY_SCALE, cfg.pyramid_levels, cfg.downscale_factor, cfg.presmooth_sigma)
    pb = _pyramid(b * INTENSITY_SCALE, cfg.pyramid_levels, cfg.downscale_factor, cfg.presmooth_sigma)
    alpha2 = float(cfg.alpha) ** 2
    flow = np.zeros((*pa[-1].shape, 2))
    for level in range(cfg.pyramid_levels - 1, -1, -1):
        la, lb = pa[level], pb[level]
        if flow.shape[:2] != la.shape:
            flow = _upsample_flow(flow, la.shape, cfg.downscale_factor)
        lb_warped = bilinear_warp(lb, flow, backend=backend)
        ax, ay = _gradients(la)
        bx, by = _gradients(lb_warped)
        ix = np.ascontiguousarray(0.5 * (ax + bx))
        iy = np.ascontiguousarray(0.5 * (ay + by))
        it = np.ascontiguousarray(lb_warped - la)
        u0 = np.ascontiguousarray(flow[..., 0])
        v0 = np.ascontiguousarray(flow[..., 1])
        u, v = kern.hs_iterate(ix, iy, it, u0, v0, alpha2, cfg.iterations_per_level)
        flow = np.stack([np.asarray(u), np.asarray(v)], axis=-1)
    return flow


# ---------------------------------------------------------------------- depth


@dataclass(frozen=True)
class DepthProvider:
    """Where depth maps come from.

    ``kind`` is ``"constant"`` (uniform ``value``), ``"file"`` (``path`` is a
    depth ``.flo`` file, or a directory of ``<frame_id>.flo`` files) or
    ``"synthetic"`` (ground truth supplied by the caller per frame id).
    """

    kind: str = "constant"
    value: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "file", "synthetic"):
            raise ConfigError(f"unknown depth provider {self.kind!r}")
        if self.kind == "constant" and not (np.isfinite(self.value) and self.value > 0):
            raise ConfigError(f"constant depth must be > 0, got {self.value}")
        if self.kind == "file" and not self.path:
            raise ConfigError("file depth provider needs a path")

    @classmethod
    def parse(cls, text: str) -> "DepthProvider":
        """Parse ``constant:V``, ``file:PATH`` or ``synthetic``."""
        text = text.strip()
        if text == "synthetic":
            return cls("synthetic")
        kind, _, arg = text.partition(":")
        if kind == "constant":
            try:
                return cls("constant", value=float(arg or 1.0))
            except ValueError:
                raise ConfigError(f"bad constant depth {arg!r}") from None
        if kind == "file" and arg:
            return cls("file", path=arg)
        raise ConfigError(f"cannot parse depth provider {text!r}")

    def __str__(self):
        if self.kind == "constant":
            return f"constant:{self.value!r}"
        if self.kind == "file":
            return f"file:{self.path}"
        return "synthetic"


def provide_depth(provider: DepthProvider, frame, *, frame_id=None, synthetic=None) -> np.ndarray:
    """Depth map for ``frame``.

    Args:
        provider: the depth source.
        frame: the image the depth belongs to (fixes the output shape).
        frame_id: identifier used for directory lookups and synthetic lookups.
        synthetic: mapping ``frame_id -> depth`` for the synthetic provider.
    """
    shape = np.shape(frame)
    if provider.kind == "constant":
        return as_depth(np.full(shape, float(provider.value)))
    if provider.kind == "file":
        path = Path(provider.path)
        if path.is_dir():
            if frame_id is None:
                raise DataError("frame_id is required to look up depth in a directory")
            path = path / f"{frame_id}.flo"
        depth = read_depth(path)
        if depth.shape != shape:
            raise ShapeError(f"depth file {path} has shape {depth.shape}, frame is {shape}")
        return depth
    if synthetic is None or frame_id not in synthetic:
        raise DataError(f"no synthetic ground-truth depth for frame {frame_id!r}")
    return as_depth(synthetic[frame_id], shape)
