"""Training objective: Charbonnier reconstruction loss plus a structure loss
on a feature map, weighted 0.95 / 0.05 by default.

Losses are summed over pixels. ``LossReport.per_pixel`` gives the mean for
comparison across image sizes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

@dataclass(frozen=True)
class LossWeights:
    reconstruction: float = 0.95
    structure: float = 0.05
    epsilon: float = 1e-4

    def __post_init__(self):
        if self.reconstruction < 0 or self.structure < 0:
            raise ConfigError("loss weights must be non-negative")
        if not self.epsilon > 0:
            raise ConfigError("Charbonnier epsilon must be > 0")


def charbonnier(x, eps: float = 1e-4):
    """sqrt(x^2 + eps^2), evaluated without overflow."""
    return np.hypot(np.asarray(x, dtype=np.float64), eps)


def charbonnier_grad(x, eps: float = 1e-4):
    x = np.asarray(x, dtype=np.float64)
    return x / np.hypot(x, eps)


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    return pred, gt


def reconstruction_loss(pred, gt, eps: float = 1e-4) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.sum(charbonnier(pred - gt, eps)))


# -------------------------------------------------------------- feature maps


def _sobel(img):
    """Sobel responses with edge-replicated borders, as smoothing of a central
    difference so flat regions give exact zeros."""
    p = np.pad(img, 1, mode="edge")
    dx = p[:, 2:] - p[:, :-2]
    dy = p[2:, :] - p[:-2, :]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


def _sobel_adjoint(ux, uy):
    """Transpose of :func:`_sobel` applied to the pair of cotangents."""
    h, w = ux.shape
    tx = np.zeros((h + 2, w))
    tx[:-2] += ux
    tx[1:-1] += 2.0 * ux
    tx[2:] += ux
    ty = np.zeros((h, w + 2))
    ty[:, :-2] += uy
    ty[:, 1:-1] += 2.0 * uy
    ty[:, 2:] += uy
    gp = np.zeros((h + 2, w + 2))
    gp[:, 2:] += tx
    gp[:, :-2] -= tx
    gp[2:, :] += ty
    gp[:-2, :] -= ty
    # fold the replicated border back onto the edge pixels
    gp[1, :] += gp[0, :]
    gp[-2, :] += gp[-1, :]
    gp[:, 1] += gp[:, 0]
    gp[:, -2] += gp[:, -1]
    return gp[1:-1, 1:-1]


class FeatureExtractor:
    """Single-channel feature map for the structure loss.

    ``"sobel_magnitude"`` (default) is the Sobel gradient magnitude with
    edge-replicated borders; ``"identity"`` returns the image unchanged.
    At zero gradient the magnitude's subgradient is taken as 0.
    """

    KINDS = ("identity", "sobel_magnitude")

    def __init__(self, kind: str = "sobel_magnitude"):
        if kind not in self.KINDS:
            raise ConfigError(f"unknown feature extractor {kind!r}")
        self.kind = kind

    def __repr__(self):
        return f"FeatureExtractor({self.kind!r})"

    def __call__(self, img):
        img = np.asarray(img, dtype=np.float64)
        if self.kind == "identity":
            return img
        gx, gy = _sobel(img)
        return np.sqrt(gx * gx + gy * gy)

    def vjp(self, img, upstream):
        img = np.asarray(img, dtype=np.float64)
        if self.kind == "identity":
            return np.asarray(upstream, dtype=np.float64)
        gx, gy = _sobel(img)
        mag = np.sqrt(gx * gx + gy * gy)
        safe = np.where(mag > 0, mag, 1.0)
        ux = np.where(mag > 0, upstream * gx / safe, 0.0)
        uy = np.where(mag > 0, upstream * gy / safe, 0.0)
        return _sobel_adjoint(ux, uy)


def structure_loss(pred, gt, phi: FeatureExtractor | None = None, eps: float = 1e-4) -> float:
    pred, gt = _check_pair(pred, gt)
    phi = phi or FeatureExtractor()
    return reconstruction_loss(phi(pred), phi(gt), eps)


@dataclass(frozen=True)
class LossReport:
    total: float
    reconstruction: float
    structure: float
    n_pixels: int

    @property
    def per_pixel(self) -> float:
        return self.total / self.n_pixels


def total_loss_and_grad(pred, gt, weights: LossWeights | None = None, phi: FeatureExtractor | None = None):
    """Weighted loss and its gradient with respect to ``pred``.

    Returns:
        ``(loss, grad)``; ``loss`` is a :class:`LossReport` whose ``total``
        is the scalar objective.
    """
    weights = weights or LossWeights()
    phi = phi or FeatureExtractor()
    pred, gt = _check_pair(pred, gt)
    eps = weights.epsilon
    diff = pred - gt
    l1 = float(np.sum(charbonnier(diff, eps)))
    fdiff = phi(pred) - phi(gt)
    l2 = float(np.sum(charbonnier(fdiff, eps)))
    grad = weights.reconstruction * charbonnier_grad(diff, eps)
    if weights.structure != 0.0:
        grad = grad + weights.structure * phi.vjp(pred, charbonnier_grad(fdiff, eps))
    total = weights.reconstruction * l1 + weights.structure * l2
    return LossReport(total, l1, l2, pred.size), grad
