import math

import numpy as np
import pytest

from angiointerp import pipeline
from angiointerp.core import Triplet, read_flow
from angiointerp.errors import ConfigError, NumericError
from angiointerp.estimators import DepthProvider, FlowEstimatorConfig
from angiointerp.evaluation import psnr
from angiointerp.loss import LossWeights
from angiointerp.pipeline import (
    BlendParams,
    PipelineConfig,
    blend_weight,
    fit_blend_params,
    format_config,
    interpolate,
    load_config,
    parse_config_text,
)


def _gt_kwargs(clip, k):
    return dict(flows=(clip.flows_fwd[k], clip.flows_bwd[k]), depths=(clip.depths[k], clip.depths[k + 1]))


def test_static_scene_returns_input(small_clip):
    frame = small_clip.frames[12]
    out, diag = interpolate(frame, frame, 0.5)
    assert np.abs(out - frame).max() <= 1e-6
    assert not diag.flow_01.any()
    assert psnr(out, frame) == 99.0


def test_gt_flow_half_frame_quality(small_clip):
    start = small_clip.steady_state_start()
    for k in range(start, len(small_clip.half_frames)):
        out, _ = interpolate(small_clip.frames[k], small_clip.frames[k + 1], 0.5, **_gt_kwargs(small_clip, k))
        assert psnr(out, small_clip.half_frames[k], small_clip.half_masks[k]) >= 40.0


def test_small_t_stays_near_first_frame(small_clip):
    k = 9
    a, b = small_clip.frames[k], small_clip.frames[k + 1]
    assert psnr(a, b) < 40  # the pair really moves
    out, _ = interpolate(a, b, 0.01)
    assert psnr(out, a) > psnr(out, b)
    out, _ = interpolate(a, b, 0.99)
    assert psnr(out, b) > psnr(out, a)


def test_deterministic(small_clip):
    a, b = small_clip.frames[5], small_clip.frames[6]
    assert interpolate(a, b, 0.5)[0].tobytes() == interpolate(a, b, 0.5)[0].tobytes()


@pytest.mark.parametrize("axis", [0, 1])
def test_flip_equivariance(small_clip, axis):
    a, b = small_clip.frames[8], small_clip.frames[9]
    out = interpolate(a, b, 0.5)[0]
    flipped = interpolate(np.flip(a, axis), np.flip(b, axis), 0.5)[0]
    assert np.abs(np.flip(flipped, axis) - out).max() < 1e-9


def test_diagnostics_and_dump(small_clip, tmp_path):
    a, b = small_clip.frames[5], small_clip.frames[6]
    out, diag = interpolate(a, b, 0.5, **_gt_kwargs(small_clip, 5))
    assert diag.projection_t0.coverage.shape == a.shape
    assert np.isfinite(diag.flow_t0).all() and np.isfinite(diag.flow_t1).all()
    np.testing.assert_allclose(out, np.clip(0.5 * diag.warped_0 + 0.5 * diag.warped_1, 0, 1), atol=1e-15)
    diag.dump(tmp_path, stem="x")
    np.testing.assert_array_equal(read_flow(tmp_path / "x_flow_01.flo"), small_clip.flows_fwd[5].astype(np.float32))
    assert (tmp_path / "x_coverage_t0.pgm").exists() and (tmp_path / "x_warped_1.pgm").exists()


def test_residual_hook(small_clip):
    a, b = small_clip.frames[5], small_clip.frames[6]
    base, _ = interpolate(a, b, 0.5, **_gt_kwargs(small_clip, 5))
    shifted, _ = interpolate(a, b, 0.5, residual=np.full(a.shape, 0.01), **_gt_kwargs(small_clip, 5))
    np.testing.assert_allclose(shifted, np.clip(base + 0.01, 0, 1), atol=1e-15)


def test_uniform_kernel_mode_runs(small_clip):
    a, b = small_clip.frames[5], small_clip.frames[6]
    cfg = PipelineConfig(kernel_mode="uniform")
    out, _ = interpolate(a, b, 0.5, cfg, **_gt_kwargs(small_clip, 5))
    sharp, _ = interpolate(a, b, 0.5, **_gt_kwargs(small_clip, 5))
    assert not np.array_equal(out, sharp)


def test_synthetic_depth_by_frame_id(small_clip):
    cfg = PipelineConfig(depth=DepthProvider("synthetic"))
    ids = small_clip.frame_ids()
    out, diag = interpolate(
        small_clip.frames[3], small_clip.frames[4], 0.5, cfg, frame_ids=(ids[3], ids[4]), synthetic_depths=small_clip.depth_lookup()
    )
    np.testing.assert_array_equal(diag.depth_0, small_clip.depths[3])


def test_t_validation():
    with pytest.raises(ConfigError):
        interpolate(np.zeros((64, 64)), np.zeros((64, 64)), 1.0)
    with pytest.raises(ConfigError):
        PipelineConfig(t_values=(0.0,))
    with pytest.raises(ConfigError):
        PipelineConfig(t_values=())
    with pytest.raises(ConfigError):
        PipelineConfig(kernel_mode="gauss")


def test_blend_weight():
    assert blend_weight(0.3) == 0.3
    assert blend_weight(0.5, 1.0) == pytest.approx(1 / (1 + math.exp(-1)))
    assert blend_weight(0.25, 1e-12) == pytest.approx(0.25)


# ------------------------------------------------------------------ config


def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig(
        t_values=(0.25, 0.5, 0.75),
        flow=FlowEstimatorConfig(pyramid_levels=3, alpha=7.5),
        depth=DepthProvider("constant", 2.0),
        kernel_mode="uniform",
        loss=LossWeights(0.9, 0.1, 1e-3),
        threads=4,
    )
    (tmp_path / "c.cfg").write_text(format_config(cfg))
    assert load_config(tmp_path / "c.cfg") == cfg


def test_config_comments_and_defaults():
    cfg = parse_config_text("# comment\n\nt = 0.3  # trailing\nflow.iterations = 20\n")
    assert cfg.t_values == (0.3,) and cfg.flow.iterations_per_level == 20
    assert cfg.flow.alpha == 10.0 and cfg.kernel_mode == "delta"


@pytest.mark.parametrize("text", ["bogus = 1", "t 0.5", "threads = many", "t = 1.5", "flow.alpha = -1"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


# --------------------------------------------------------------------- fit


@pytest.fixture(scope="module")
def fit_data(small_clip):
    ks = range(small_clip.steady_state_start(), small_clip.steady_state_start() + 4)
    trips = [Triplet(small_clip.frames[k - 1], small_clip.frames[k], small_clip.frames[k + 1]) for k in ks]
    m = small_clip.model
    flows = [(m.flow(k - 1, k + 1), m.flow(k + 1, k - 1)) for k in ks]
    return trips, flows


def test_fit_argument_checks(fit_data):
    trips, flows = fit_data
    with pytest.raises(ConfigError):
        fit_blend_params(trips, steps=0, flows=flows)
    with pytest.raises(ConfigError):
        fit_blend_params([], steps=1)
    with pytest.raises(ConfigError):
        fit_blend_params(trips, steps=1, lr=-1.0, flows=flows)


def test_fit_zero_lr_keeps_params(fit_data):
    trips, flows = fit_data
    init = BlendParams(0.1, 2.0)
    assert fit_blend_params(trips, init=init, steps=1, lr=0.0, flows=flows) == init


def test_fit_never_worse_than_start(fit_data):
    trips, flows = fit_data
    hist = []
    fit_blend_params(trips, steps=10, lr=1e-3, flows=flows, history=hist)
    assert len(hist) == 11
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert hist[-1] < hist[0]


def test_fit_gradient_matches_finite_differences(fit_data):
    trips, flows = fit_data
    cfg = PipelineConfig()
    cases = pipeline.prepare_fit_cases(trips, cfg, flows=flows)
    phi = pipeline.FeatureExtractor(cfg.feature)
    params = BlendParams(0.2, 0.8)
    _, grad = pipeline._fit_objective(cases, params, cfg, phi)
    h = 1e-5
    fd = [
        (pipeline._fit_objective(cases, BlendParams(0.2 + h, 0.8), cfg, phi)[0] - pipeline._fit_objective(cases, BlendParams(0.2 - h, 0.8), cfg, phi)[0]) / (2 * h),
        (pipeline._fit_objective(cases, BlendParams(0.2, 0.8 + h), cfg, phi)[0] - pipeline._fit_objective(cases, BlendParams(0.2, 0.8 - h), cfg, phi)[0]) / (2 * h),
    ]
    np.testing.assert_allclose(grad, fd, rtol=1e-4)


def test_fit_stationary_bias(small_clip):
    # symmetric triplets (next == prev) make bias = 0 a stationary point
    k = small_clip.steady_state_start()
    f = small_clip.frames
    trips = [Triplet(f[k], f[k], f[k])]
    hist = []
    best = fit_blend_params(trips, init=BlendParams(0.0, 1.0), steps=3, lr=1e-3, history=hist)
    assert hist[-1] <= hist[0] and best.bias == 0.0


def test_fit_non_finite_loss_reports_step(fit_data, monkeypatch):
    trips, flows = fit_data
    real = pipeline.total_loss_and_grad
    calls = {"n": 0}

    def flaky(pred, gt, weights=None, phi=None):
        calls["n"] += 1
        report, grad = real(pred, gt, weights, phi)
        if calls["n"] > 2 * len(trips):  # third objective evaluation
            report = type(report)(float("nan"), report.reconstruction, report.structure, report.n_pixels)
        return report, grad

    monkeypatch.setattr(pipeline, "total_loss_and_grad", flaky)
    with pytest.raises(NumericError) as info:
        fit_blend_params(trips, steps=5, lr=1e-4, flows=flows)
    assert info.value.step == 2
