"""Interpolation quality metrics, the leave-one-out clip protocol, cardiac
periodicity detection and report emission (CSV, JSON, SVG)."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
CSV_COLUMNS = ("clip", "method", "frame_index", "psnr_db", "ssim")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, mask=None) -> float:
    """PSNR in dB with peak 1.0, capped at 99 dB.

    ``mask`` marks pixels to exclude (True = excluded).
    """
    a, b = _pair(a, b)
    err = (a - b) ** 2
    if mask is not None:
        err = err[~np.asarray(mask, dtype=bool)]
        if err.size == 0:
            raise DataError("mask excludes every pixel")
    mse = float(np.mean(err))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable 'valid' correlation: one output per full window position."""
    from numpy.lib.stride_tricks import sliding_window_view

    rows = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(rows, len(g), axis=1) @ g


def ssim_map(a, b, data_range=1.0):
    a, b = _pair(a, b)
    if min(a.shape) < SSIM_WINDOW:
        raise ShapeError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape}")
    g = gaussian_window()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def ssim(a, b, mask=None) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03, range 1).

    The map covers every position where the window fits inside the image.
    A ``mask`` drops window centres on excluded pixels.
    """
    m = ssim_map(a, b)
    if mask is not None:
        r = SSIM_WINDOW // 2
        keep = ~np.asarray(mask, dtype=bool)[r:-r, r:-r]
        if not keep.any():
            raise DataError("mask excludes every SSIM window")
        return float(np.mean(m[keep]))
    return float(np.mean(m))


# -------------------------------------------------------------------- series


@dataclass
class FrameRecord:
    index: int
    psnr: float
    ssim: float


@dataclass
class MetricSeries:
    clip: str
    method: str
    records: list = field(default_factory=list)

    def psnr_values(self):
        return np.array([r.psnr for r in self.records])

    def ssim_values(self):
        return np.array([r.ssim for r in self.records])

    def indices(self):
        return [r.index for r in self.records]

    def mean_psnr(self):
        return float(np.mean(self.psnr_values()))

    def mean_ssim(self):
        return float(np.mean(self.ssim_values()))

    def window(self, start=None, stop=None):
        """Records whose frame index lies in ``[start, stop)``."""
        keep = [
            r for r in self.records if (start is None or r.index >= start) and (stop is None or r.index < stop)
        ]
        return MetricSeries(self.clip, self.method, keep)


def interpolation_protocol(frames, interpolate, *, t=0.5, masks=None, clip="clip", method="method", workers=1):
    """Predict every interior frame from its two neighbours and score it.

    Args:
        frames: sequence of N >= 3 images.
        interpolate: callable ``(prev, next, t, index) -> frame`` where
            ``index`` is the frame being predicted.
        masks: optional mapping/sequence ``index -> bool mask`` of pixels to
            exclude from scoring (e.g. disocclusions).
        workers: thread count; results do not depend on it.

    Returns:
        MetricSeries with N - 2 records, indices 1 .. N - 2.
    """
    n = len(frames)
    if n < 3:
        raise DataError(f"protocol needs at least 3 frames, got {n}")

    def score(i):
        pred = interpolate(frames[i - 1], frames[i + 1], t, i)
        mask = None if masks is None else masks[i]
        return FrameRecord(i, psnr(pred, frames[i], mask), ssim(pred, frames[i], mask))

    indices = range(1, n - 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(score, indices))
    else:
        records = [score(i) for i in indices]
    return MetricSeries(clip, method, records)


# --------------------------------------------------------------- periodicity


@dataclass
class PeriodReport:
    detected_period: int | None
    dip_indices: list
    confidence: float
    autocorrelation: list = field(default_factory=list)


MIN_PERIOD_RECORDS = 8
PEAK_THRESHOLD = 0.3
_TIE_TOL = 1e-9


def autocorrelation(values):
    """Mean-removed, lag-normalised autocorrelation ``r[k]`` for k = 0 .. N//2.

    Each lag averages over its N - k overlapping products, so an exactly
    periodic signal reaches 1 at multiples of its period.
    """
    x = np.asarray(values, dtype=np.float64)
    x = x - x.mean()
    n = len(x)
    var = float(np.dot(x, x)) / n
    r = np.zeros(n // 2 + 1)
    if var <= 1e-15:
        return r
    for k in range(n // 2 + 1):
        r[k] = float(np.dot(x[: n - k], x[k:])) / (n - k) / var
    return r


def detect_period(series, *, threshold=PEAK_THRESHOLD) -> PeriodReport:
    """Dominant period of a PSNR series and the frames where it dips.

    The period is the lag (>= 2) of the highest interior local maximum of
    :func:`autocorrelation` with value >= ``threshold``; ties go to the
    shorter lag. Dips are local minima below mean - 0.5 * std.
    """
    if isinstance(series, MetricSeries):
        values = series.psnr_values()
        index = series.indices()
    else:
        values = np.asarray(series, dtype=np.float64)
        index = list(range(len(values)))
    n = len(values)
    if n < MIN_PERIOD_RECORDS:
        raise DataError(f"period detection needs at least {MIN_PERIOD_RECORDS} records, got {n}")
    r = autocorrelation(values)
    best, best_val = None, -np.inf
    for k in range(2, len(r) - 1):
        if r[k] >= r[k - 1] and r[k] >= r[k + 1] and r[k] >= threshold:
            if r[k] > best_val + _TIE_TOL:
                best, best_val = k, r[k]
    confidence = float(np.clip(best_val, 0.0, 1.0)) if best is not None else 0.0

    dips = []
    if np.std(values) > 0:
        cut = values.mean() - 0.5 * values.std()
        for i in range(n):
            left = values[i - 1] if i > 0 else np.inf
            right = values[i + 1] if i < n - 1 else np.inf
            if values[i] < cut and values[i] <= left and values[i] <= right:
                dips.append(index[i])
    return PeriodReport(best, dips, confidence, r.tolist())


# -------------------------------------------------------------------- report


def write_csv(series_list, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for s in series_list:
            for rec in s.records:
                writer.writerow([s.clip, s.method, rec.index, f"{rec.psnr:.6f}", f"{rec.ssim:.6f}"])


def summary(series_list, period_reports):
    """JSON-ready summary: per (clip, method) means and period analysis."""
    out = {"series": []}
    for s, rep in zip(series_list, period_reports):
        entry = {
            "clip": s.clip,
            "method": s.method,
            "n_frames": len(s.records),
            "mean_psnr_db": round(s.mean_psnr(), 6),
            "mean_ssim": round(s.mean_ssim(), 6),
            "period": None,
        }
        if rep is not None:
            entry["period"] = {
                "detected_period": rep.detected_period,
                "confidence": round(rep.confidence, 6),
                "dip_indices": list(rep.dip_indices),
            }
        out["series"].append(entry)
    return out


_PALETTE = ("#c0392b", "#2c6fbb", "#27ae60", "#222222", "#8e44ad", "#d35400")


def render_svg(series_list, period_reports, width=720, height=360):
    """Line plot of PSNR against frame index, one polyline per series,
    one circle per detected dip."""
    pad = 48
    xs = [r.index for s in series_list for r in s.records]
    ys = [r.psnr for s in series_list for r in s.records]
    x0, x1 = min(xs), max(xs)
    y0, y1 = math.floor(min(ys)) - 1, math.ceil(max(ys)) + 1
    sx = (width - 2 * pad) / max(x1 - x0, 1)
    sy = (height - 2 * pad) / max(y1 - y0, 1e-9)

    def px(x, y):
        return pad + (x - x0) * sx, height - pad - (y - y0) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">frame index</text>',
        f'<text x="14" y="{height / 2:.1f}" transform="rotate(-90 14 {height / 2:.1f})" '
        f'text-anchor="middle" font-size="12">PSNR [dB]</text>',
        f'<text x="{pad - 4}" y="{height - pad:.1f}" text-anchor="end" font-size="10">{y0}</text>',
        f'<text x="{pad - 4}" y="{pad + 4:.1f}" text-anchor="end" font-size="10">{y1}</text>',
    ]
    for n, (s, rep) in enumerate(zip(series_list, period_reports)):
        color = _PALETTE[n % len(_PALETTE)]
        pts = " ".join("%.2f,%.2f" % px(r.index, r.psnr) for r in s.records)
        parts.append(
            f'<polyline class="series" data-method="{s.method}" data-clip="{s.clip}" '
            f'fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        by_index = {r.index: r.psnr for r in s.records}
        for d in rep.dip_indices if rep is not None else ():
            cx, cy = px(d, by_index[d])
            parts.append(
                f'<circle class="dip" data-method="{s.method}" data-index="{d}" '
                f'cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="none" stroke="{color}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(series_list, period_reports, out_dir):
    """Write ``metrics.csv``, ``summary.json`` and ``psnr.svg`` into ``out_dir``."""
    if not series_list:
        raise DataError("nothing to report")
    if len(period_reports) != len(series_list):
        raise DataError("need one period report (or None) per series")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(series_list, out / "metrics.csv")
    (out / "summary.json").write_text(json.dumps(summary(series_list, period_reports), indent=2) + "\n")
    (out / "psnr.svg").write_text(render_svg(series_list, period_reports))
    return out
