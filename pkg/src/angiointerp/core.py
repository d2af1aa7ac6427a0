"""Shared array types, rounding, seeding and file I/O.

Frames, flows, depth maps and kernel fields are plain numpy arrays:

* image:   ``(H, W)`` float64, values in ``[0, 1]``
* flow:    ``(H, W, 2)`` float64, channel 0 = u (x, rightward), channel 1 = v (y, downward)
* depth:   ``(H, W)`` float64, strictly positive
* kernels: ``(H, W, k*k)`` float64, non-negative, each pixel's taps sum to 1

The ``as_*`` helpers validate and return C-contiguous float64 copies marked
read-only, so values handed around the pipeline are never mutated in place.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, FormatError, ShapeError

FLO_MAGIC = 202021.25
KERNEL_SUM_TOL = 1e-6


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64).copy()
    arr.setflags(write=False)
    return arr


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains non-finite values")


def as_image(data, *, clip: bool = False) -> np.ndarray:
    """Validate a grayscale frame. With ``clip=True`` values are clamped to [0, 1]."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ShapeError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
    _require_finite(arr, "image")
    if clip:
        arr = np.clip(arr, 0.0, 1.0)
    elif arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("image intensities must lie in [0, 1]")
    return _frozen(arr)


def as_flow(data, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ShapeError(f"flow must have shape (H, W, 2), got {arr.shape}")
    if shape is not None and arr.shape[:2] != tuple(shape):
        raise ShapeError(f"flow shape {arr.shape[:2]} does not match {tuple(shape)}")
    _require_finite(arr, "flow")
    return _frozen(arr)


def as_depth(data, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"depth must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"depth shape {arr.shape} does not match {tuple(shape)}")
    _require_finite(arr, "depth")
    if np.any(arr <= 0.0):
        raise DomainError("depth values must be strictly positive")
    return _frozen(arr)


def as_kernels(data, shape: tuple[int, int] | None = None, *, check_sum: bool = True) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"kernel field must have shape (H, W, k*k), got {arr.shape}")
    k = kernel_side(arr)
    if k % 2:
        raise ShapeError(f"kernel side must be even, got {k}")
    if shape is not None and arr.shape[:2] != tuple(shape):
        raise ShapeError(f"kernel field shape {arr.shape[:2]} does not match {tuple(shape)}")
    _require_finite(arr, "kernel field")
    if check_sum:
        if np.any(arr < 0.0):
            raise DomainError("kernel weights must be non-negative")
        if np.max(np.abs(arr.sum(axis=2) - 1.0)) > KERNEL_SUM_TOL:
            raise DomainError("each per-pixel kernel must sum to 1 within 1e-6")
    return _frozen(arr)


def kernel_side(kernels: np.ndarray) -> int:
    k = int(round(np.sqrt(kernels.shape[2])))
    if k * k != kernels.shape[2]:
        raise ShapeError(f"last kernel axis {kernels.shape[2]} is not a square number")
    return k


def check_same_shape(*arrays, names=None):
    shapes = [a.shape[:2] for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ", ".join(names) if names else "inputs"
        raise ShapeError(f"{label} must share H x W, got {shapes}")


def round_half_away(x):
    """Round to nearest integer, ties away from zero (same rule as C ``round``).

    Works on the exact difference ``x - trunc(x)`` so values such as
    0.49999999999999994 are not pushed over the tie by ``x + 0.5``.
    """
    x = np.asarray(x, dtype=np.float64)
    r = np.trunc(x)
    return r + np.where(np.abs(x - r) >= 0.5, np.sign(x), 0.0)


def make_rng(seed, *spawn_key: int) -> np.random.Generator:
    """Deterministic generator; ``spawn_key`` selects an independent sub-stream
    (e.g. one per frame) without depending on call order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(spawn_key)))


@dataclass(frozen=True)
class Triplet:
    """Three consecutive frames; ``mid`` is the prediction target."""

    prev: np.ndarray
    mid: np.ndarray
    next: np.ndarray
    source_id: str = ""
    frame_index: int = 0

    def __post_init__(self):
        for name in ("prev", "mid", "next"):
            object.__setattr__(self, name, as_image(getattr(self, name)))
        check_same_shape(self.prev, self.mid, self.next, names=("prev", "mid", "next"))

    @property
    def shape(self):
        return self.mid.shape


# ---------------------------------------------------------------- frame I/O


def _read_pgm(raw: bytes, path) -> np.ndarray:
    if not raw.startswith(b"P5"):
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    fields = []
    pos = 2
    n = len(raw)
    while len(fields) < 3:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        try:
            fields.append(int(raw[start:pos]))
        except ValueError:
            raise FormatError(f"{path}: malformed PGM header") from None
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError(f"{path}: invalid PGM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    payload = raw[pos : pos + width * height]
    if len(payload) != width * height:
        raise FormatError(f"{path}: truncated PGM payload ({len(payload)} of {width * height} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def _read_png(path) -> np.ndarray:
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            if im.mode not in ("L", "P", "1"):
                raise FormatError(f"{path}: expected 8-bit grayscale PNG, got mode {im.mode}")
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot decode PNG ({exc})") from exc


def load_frame(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM (P5) or PNG frame into a [0, 1] float image."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw.startswith(b"P5"):
        data = _read_pgm(raw, path)
    elif raw.startswith(b"\x89PNG"):
        data = _read_png(path)
    else:
        raise FormatError(f"{path}: unsupported frame format")
    return as_image(data.astype(np.float64) / 255.0)


def quantize(img) -> np.ndarray:
    """Map [0, 1] intensities to bytes with round-half-away-from-zero."""
    scaled = round_half_away(np.asarray(img, dtype=np.float64) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def save_frame(img, path) -> None:
    """Write a frame as PGM, or PNG when the suffix is ``.png``."""
    path = Path(path)
    data = quantize(img)
    if data.ndim != 2:
        raise ShapeError("only 2-D frames can be saved")
    if path.suffix.lower() == ".png":
        from PIL import Image as PILImage

        PILImage.fromarray(data, mode="L").save(path)
        return
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


# ----------------------------------------------------------------- flow I/O


def write_flow(flow, path) -> None:
    """Write a Middlebury ``.flo`` file (little-endian float32, interleaved u, v)."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ShapeError(f"flow must have shape (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flow(path) -> np.ndarray:
    """Read a Middlebury ``.flo`` file into an ``(H, W, 2)`` float64 array."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 12:
        raise FormatError(f"{path}: file too short for a .flo header")
    magic, w, h = struct.unpack("<fii", raw[:12])
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path}: bad .flo magic {magic!r}")
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid .flo dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(raw) != expected:
        raise FormatError(f"{path}: size mismatch, expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return as_flow(data.astype(np.float64))


def write_depth(depth, path) -> None:
    """Depth maps travel in the ``.flo`` container: u = depth, v = 0."""
    depth = np.asarray(depth, dtype=np.float64)
    write_flow(np.stack([depth, np.zeros_like(depth)], axis=-1), path)


def read_depth(path) -> np.ndarray:
    return as_depth(read_flow(path)[..., 0])
