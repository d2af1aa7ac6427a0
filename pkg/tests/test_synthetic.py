import numpy as np
import pytest

from angiointerp.errors import ConfigError
from angiointerp.evaluation import psnr
from angiointerp.synthetic import DIASTOLE, SYSTOLE, TRANSITION, PhantomConfig, PhantomModel, generate_clip, phase_labels, write_clip
from angiointerp.warping import bilinear_warp


def test_counts(small_clip):
    n = small_clip.config.n_frames
    assert small_clip.frames.shape == (n, 64, 64)
    assert len(small_clip.half_frames) == n - 1
    assert len(small_clip.flows_fwd) == len(small_clip.flows_bwd) == len(small_clip.masks) == n - 1
    assert len(small_clip.phases) == n
    assert (small_clip.depths > 0).all()
    assert small_clip.frames.min() >= 0 and small_clip.frames.max() <= 1


def test_same_seed_is_bitwise_identical():
    cfg = PhantomConfig(seed=11, size=(48, 48), n_frames=5)
    a, b = generate_clip(cfg), generate_clip(cfg)
    for name in ("frames", "half_frames", "flows_fwd", "flows_bwd", "masks", "depths"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_different_seed_differs():
    a = generate_clip(PhantomConfig(seed=1, size=(48, 48), n_frames=3))
    b = generate_clip(PhantomConfig(seed=2, size=(48, 48), n_frames=3))
    assert not np.array_equal(a.frames, b.frames)


def test_static_phantom():
    clip = generate_clip(PhantomConfig(size=(48, 48), n_frames=12, motion_amplitude=0.0))
    assert not clip.flows_fwd.any() and not clip.flows_bwd.any()
    filled = clip.steady_state_start() - 1
    assert filled < 12
    for k in range(filled + 1, 12):
        np.testing.assert_array_equal(clip.frames[k], clip.frames[filled])


def test_reference_inverse_is_accurate():
    model = PhantomModel(PhantomConfig(size=(64, 64)))
    for tau in (0.0, 1.3, 3.0, 7.5):
        p = model.reference_points(tau)
        x = p + model.displacement(tau) * model.direction(p)
        np.testing.assert_allclose(x, model._grid, rtol=0, atol=1e-9)


def test_flow_moves_reference_points():
    model = PhantomModel(PhantomConfig(size=(64, 64)))
    a, b = 1.0, 2.5
    x_a = model._grid
    x_b = x_a + model.flow(a, b)
    p = model.reference_points(a)
    np.testing.assert_allclose(x_b, p + model.displacement(b) * model.direction(p), atol=1e-9)


def test_self_consistency_outside_masks(small_clip):
    # warping frame n+1 by the true backward flow reproduces n+1 from n
    for n in range(len(small_clip.flows_fwd)):
        warped = bilinear_warp(small_clip.frames[n], small_clip.flows_bwd[n])
        excluded = small_clip.masks[n] | small_clip.front_masks[n]
        assert psnr(warped, small_clip.frames[n + 1], excluded) >= 45.0


def test_periodic_after_fill():
    cfg = PhantomConfig(size=(64, 64), n_frames=30)
    model = PhantomModel(cfg)
    start = model.fill_complete_time()
    for tau in (start + 0.5, start + 2.0, start + 5.25):
        np.testing.assert_allclose(model.render(tau + cfg.cycle_period), model.render(tau), rtol=0, atol=1e-9)


def test_half_frames_lie_between(small_clip):
    m = small_clip.model
    np.testing.assert_array_equal(small_clip.half_frames[4], m.render(4.5))


def test_front_mask_empty_after_fill(small_clip):
    start = small_clip.steady_state_start()
    assert not small_clip.front_masks[start:].any()


def _runs(labels, value):
    runs, prev = 0, None
    for lab in labels:
        if lab == value and prev != value:
            runs += 1
        prev = lab
    return runs


def test_phase_labels_period_12():
    labels = phase_labels(PhantomConfig(cycle_period=12, n_frames=24))
    assert _runs(labels, TRANSITION) == 4


def test_phase_labels_period_8_by_hand():
    # sine extrema at 2, 6, 10, 14; frames 0, 8 rise (diastole), 4, 12 fall (systole)
    T, S, D = TRANSITION, SYSTOLE, DIASTOLE
    expected = [D, T, T, T, S, T, T, T, D, T, T, T, S, T, T, T]
    assert phase_labels(PhantomConfig(cycle_period=8, n_frames=16)) == expected


def test_static_labels_are_diastole():
    assert set(phase_labels(PhantomConfig(motion_amplitude=0.0, n_frames=10))) == {DIASTOLE}


def test_skew_keeps_extrema_positions():
    model = PhantomModel(PhantomConfig(size=(32, 32), cycle_period=12))
    tau = np.linspace(0, 12, 12001)
    w = model.waveform(tau)
    assert tau[np.argmax(w)] == pytest.approx(3.0, abs=2e-3)
    assert tau[np.argmin(w)] == pytest.approx(9.0, abs=2e-3)


@pytest.mark.parametrize(
    "kwargs",
    [dict(cycle_period=3), dict(motion_amplitude=-1), dict(n_frames=2), dict(size=(8, 64)), dict(waveform_skew=0.3)],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        PhantomConfig(**kwargs)


def test_write_clip(tmp_path):
    clip = generate_clip(PhantomConfig(size=(32, 32), n_frames=4))
    out = write_clip(clip, tmp_path / "clip")
    assert len(list((out / "frames").glob("*.pgm"))) == 4
    assert len(list((out / "half").glob("*.pgm"))) == 3
    assert len(list((out / "flows").glob("*.flo"))) == 6
    assert len(list((out / "masks").glob("*.pgm"))) == 3
    assert len(list((out / "depth").glob("*.flo"))) == 4
    manifest = dict(line.split("=", 1) for line in (out / "manifest.txt").read_text().splitlines())
    assert manifest["size"] == "32x32" and manifest["n_frames"] == "4"
    assert manifest["phases"].split(",") == clip.phases
