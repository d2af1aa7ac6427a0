import csv
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity

from angiointerp.errors import DataError, ShapeError
from angiointerp.evaluation import (
    FrameRecord,
    MetricSeries,
    PeriodReport,
    autocorrelation,
    detect_period,
    emit_report,
    interpolation_protocol,
    psnr,
    ssim,
)


def reference_ssim(a, b):
    return structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False)


def test_psnr_examples():
    a = np.random.default_rng(0).random((8, 8))
    assert psnr(a, a) == 99.0
    assert psnr(np.zeros((4, 4)), np.ones((4, 4))) == 0.0
    assert psnr(np.zeros((4, 4)), np.full((4, 4), 1 / 255)) == pytest.approx(48.130803608679104, abs=1e-10)


def test_psnr_symmetric_and_monotone(rng):
    a = rng.random((16, 16))
    noise = rng.uniform(-1, 1, a.shape)
    vals = [psnr(a, a + s * noise) for s in (0.001, 0.01, 0.05, 0.2)]
    assert all(x > y for x, y in zip(vals, vals[1:]))
    b = a + 0.01 * noise
    assert psnr(a, b) == psnr(b, a)


def test_psnr_mask(rng):
    a = rng.random((4, 4))
    b = a.copy()
    b[0, 0] += 0.5
    mask = np.zeros((4, 4), bool)
    mask[0, 0] = True
    assert psnr(a, b, mask) == 99.0
    with pytest.raises(DataError):
        psnr(a, b, np.ones((4, 4), bool))
    with pytest.raises(ShapeError):
        psnr(a, np.zeros((3, 3)))


def test_ssim_identity_and_symmetry(rng):
    a, b = rng.random((20, 24)), rng.random((20, 24))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)
    assert -1 <= ssim(a, b) <= 1


def test_ssim_matches_independent_implementation(rng):
    from scipy import ndimage

    tex = ndimage.gaussian_filter(rng.random((48, 48)), 1.5)
    tex = (tex - tex.min()) / (tex.max() - tex.min()) * 0.8
    for b in (tex + 0.1, np.clip(tex + rng.normal(0, 0.05, tex.shape), 0, 1)):
        assert ssim(tex, b) == pytest.approx(reference_ssim(tex, b), abs=1e-6)


def test_ssim_too_small():
    with pytest.raises(ShapeError):
        ssim(np.zeros((10, 30)), np.zeros((10, 30)))


def test_protocol_static_clip():
    frames = [np.full((16, 16), 0.3)] * 5
    series = interpolation_protocol(frames, lambda p, n, t, i: 0.5 * (p + n))
    assert series.indices() == [1, 2, 3]
    assert all(r.psnr == 99.0 and r.ssim == pytest.approx(1.0) for r in series.records)


def test_protocol_counts_and_order(rng):
    frames = [rng.random((12, 12)) for _ in range(9)]
    seen = []

    def interp(p, n, t, i):
        seen.append(i)
        assert t == 0.5
        np.testing.assert_array_equal(p, frames[i - 1])
        np.testing.assert_array_equal(n, frames[i + 1])
        return frames[i]

    series = interpolation_protocol(frames, interp, workers=4)
    assert len(series.records) == 7 and series.indices() == list(range(1, 8))
    with pytest.raises(DataError):
        interpolation_protocol(frames[:2], interp)


def test_protocol_worker_count_irrelevant(rng):
    frames = [rng.random((12, 12)) for _ in range(8)]

    def interp(p, n, t, i):
        return 0.5 * (p + n)

    a = interpolation_protocol(frames, interp, workers=1)
    b = interpolation_protocol(frames, interp, workers=5)
    assert [(r.psnr, r.ssim) for r in a.records] == [(r.psnr, r.ssim) for r in b.records]


def test_period_of_constant_series():
    rep = detect_period(np.full(20, 30.0))
    assert rep.detected_period is None and rep.confidence == 0.0


def test_period_of_sinusoid():
    n = np.arange(32)
    rep = detect_period(40 + 3 * np.sin(2 * np.pi * n / 8))
    assert rep.detected_period == 8 and rep.confidence > 0.9


def test_autocorrelation_is_one_at_exact_period():
    x = np.tile([1.0, 4.0, 2.0, 0.0, 3.0], 6)
    r = autocorrelation(x)
    assert r[0] == pytest.approx(1.0) and r[5] == pytest.approx(1.0, abs=1e-12)


def test_period_requires_eight_records():
    with pytest.raises(DataError):
        detect_period(np.arange(7.0))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3))
def test_period_offset_invariant(seed, offset):
    rng = np.random.default_rng(seed)
    x = 40 + np.sin(2 * np.pi * np.arange(30) / rng.integers(3, 10)) + 0.1 * rng.random(30)
    assert detect_period(x).detected_period == detect_period(x + offset).detected_period


def test_dips_are_low_local_minima():
    x = 40 + np.cos(2 * np.pi * np.arange(24) / 6)
    rep = detect_period(x)
    assert rep.dip_indices == [3, 9, 15, 21]


def _series(method, values, dips=()):
    recs = [FrameRecord(i + 1, v, 0.9 + 0.01 * i) for i, v in enumerate(values)]
    return MetricSeries("clipA", method, recs)


def test_report_files(tmp_path):
    s1 = _series("depth-aware", [30.0, 31.5, 29.25])
    s2 = _series("linear", [25.0, 26.0, 24.0])
    rep = PeriodReport(None, [3], 0.0)
    emit_report([s1, s2], [rep, None], tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert list(rows[0].keys()) == ["clip", "method", "frame_index", "psnr_db", "ssim"]
    assert len(rows) == 6
    summary = json.loads((tmp_path / "summary.json").read_text())
    first = summary["series"][0]
    csv_mean = np.mean([float(r["psnr_db"]) for r in rows if r["method"] == "depth-aware"])
    assert first["mean_psnr_db"] == pytest.approx(csv_mean, abs=1e-6)
    assert first["period"]["dip_indices"] == [3] and summary["series"][1]["period"] is None
    root = ET.parse(tmp_path / "psnr.svg").getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 2
    assert len(root.findall(f"{ns}circle")) == 1


def test_three_record_csv(tmp_path):
    emit_report([_series("m", [30.0, 31.0, 32.0])], [None], tmp_path)
    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(lines) == 4


def test_window():
    s = _series("m", list(range(10)))
    assert s.window(3, 6).indices() == [3, 4, 5]
    assert s.window(8).indices() == [8, 9, 10]
