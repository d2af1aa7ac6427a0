"""Random instance generators and a finite-difference checker shared by tests."""
import numpy as np

from angiointerp.core import round_half_away

TIE_MARGIN = 1e-3
FD_STEP = 1e-5


def random_projection_instance(rng, h, w, *, lattice=False):
    """Flow/depth pair. ``lattice=True`` puts flows on a 0.25 grid so
    rounding ties and collisions are frequent."""
    if lattice:
        flow = rng.integers(-12, 13, (h, w, 2)) * 0.25
    else:
        flow = rng.normal(0.0, 2.0, (h, w, 2))
    depth = rng.uniform(0.5, 3.0, (h, w))
    return flow, depth


def near_rounding_tie(flow, scale, margin=TIE_MARGIN):
    h, w = flow.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    pos = np.stack([cols + scale * flow[..., 0], rows + scale * flow[..., 1]], -1)
    frac = pos - np.floor(pos)
    return bool(np.any(np.abs(frac - 0.5) < margin))


def tie_free_projection_instance(rng, h, w, scale):
    while True:
        flow, depth = random_projection_instance(rng, h, w)
        if not near_rounding_tie(flow, scale):
            return flow, depth


def near_integer(values, margin=TIE_MARGIN):
    return bool(np.any(np.abs(values - np.round(values)) < margin))


def fd_gradient(fn, x, h=FD_STEP):
    """Central differences of scalar ``fn`` w.r.t. every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_err(analytic, numeric):
    a, n = np.ravel(analytic), np.ravel(numeric)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def landing(flow, scale):
    h, w = flow.shape[:2]
    rows, cols = np.mgrid[0:h, 0:w]
    return round_half_away(cols + scale * flow[..., 0]), round_half_away(rows + scale * flow[..., 1])


def near_charbonnier_kink(a, b, margin=1e-3):
    """True if any pixel or Sobel-magnitude residual lies within ``margin``
    of zero, where the Charbonnier curvature spikes."""
    from angiointerp.loss import FeatureExtractor

    phi = FeatureExtractor()
    return bool(np.abs(a - b).min() < margin or np.abs(phi(a) - phi(b)).min() < margin)
