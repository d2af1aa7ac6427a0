import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from angiointerp.core import Triplet, save_frame
from angiointerp.dataset import (
    DedupConfig,
    ManifestEntry,
    MaskRegion,
    apply_mask,
    augment_flips,
    deduplicate,
    extract_triplets,
    list_frames,
    read_manifest,
    read_triplet_tree,
    sample_subset,
    write_manifest,
    write_triplet_tree,
)
from angiointerp.errors import ConfigError, DataError, DomainError, FormatError


def unique_frames(rng, n, shape=(12, 12)):
    return [rng.integers(0, 256, shape) / 255.0 for _ in range(n)]


def test_recovers_unique_frames_from_doubled_stream(rng):
    uniq = unique_frames(rng, 10)
    stream, origin = [], []
    for i, f in enumerate(uniq):
        reps = 2 if i < 9 else 1
        stream += [f] * reps
        origin += [i] * reps
    kept, report = deduplicate(stream)
    assert [origin[k] for k in kept] == list(range(10))
    assert report.total == 19 and report.estimated_source_fps == pytest.approx(10 / 19 * 25)
    assert report.drop_runs == [(2 * i + 1, 2 * i + 1) for i in range(9)]


def test_all_distinct_kept(rng):
    frames = unique_frames(rng, 6)
    assert deduplicate(frames)[0] == list(range(6))


def test_compares_against_last_kept(rng):
    # a slow drift stays below threshold frame-to-frame but not in total
    base = rng.random((10, 10)) * 0.5
    frames = [base + k * 0.6 / 255 for k in range(5)]
    kept, _ = deduplicate(frames)
    assert kept == [0, 2, 4]


def test_noise_sweep_at_default_threshold(rng):
    # independent U(-a, a) noise on both copies: mean |diff| = 2a/3
    base = rng.random((64, 64)) * 0.8 + 0.1

    def noisy(a):
        return base + rng.uniform(-a, a, base.shape)

    assert deduplicate([noisy(0.5 / 255), noisy(0.5 / 255)])[0] == [0]
    assert deduplicate([noisy(2 / 255), noisy(2 / 255)])[0] == [0, 1]


def test_min_unique_gap(rng):
    frames = unique_frames(rng, 6)
    assert deduplicate(frames, DedupConfig(min_unique_gap=2))[0] == [0, 2, 4]


def test_dedup_errors():
    with pytest.raises(DataError):
        deduplicate([])
    with pytest.raises(ConfigError):
        DedupConfig(threshold=-1)
    with pytest.raises(DataError):
        deduplicate([np.zeros((2, 2)), np.zeros((3, 3))])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=20))
def test_dedup_idempotent(pattern):
    rng = np.random.default_rng(len(pattern))
    pool = unique_frames(rng, 5, (6, 6))
    frames = [pool[i] for i in pattern]
    kept, _ = deduplicate(frames)
    again, _ = deduplicate([frames[k] for k in kept])
    assert again == list(range(len(kept)))


def test_mask_examples(rng):
    img = rng.random((6, 8))
    np.testing.assert_array_equal(apply_mask(img, []), img)
    assert not apply_mask(img, [MaskRegion(0, 0, 8, 6)]).any()
    regs = [MaskRegion(1, 1, 3, 2, 0.5), MaskRegion(2, 2, 4, 3, 0.5)]
    once = apply_mask(img, regs)
    np.testing.assert_array_equal(apply_mask(once, regs), once)
    union = np.zeros((6, 8), bool)
    union[1:3, 1:4] = True
    union[2:5, 2:6] = True
    assert (once[union] == 0.5).all()
    np.testing.assert_array_equal(once[~union], img[~union])


def test_mask_out_of_bounds(rng):
    with pytest.raises(DomainError):
        apply_mask(np.zeros((4, 4)), [MaskRegion(2, 2, 3, 1)])
    with pytest.raises(ConfigError):
        MaskRegion(0, 0, 0, 1)


def test_disjoint_masks_commute(rng):
    img = rng.random((8, 8))
    a, b = MaskRegion(0, 0, 3, 3, 0.1), MaskRegion(4, 4, 3, 3, 0.9)
    np.testing.assert_array_equal(apply_mask(apply_mask(img, [a]), [b]), apply_mask(apply_mask(img, [b]), [a]))


def test_region_parsing():
    assert MaskRegion.parse("1,2,3,4") == MaskRegion(1, 2, 3, 4, 0.0)
    assert MaskRegion.parse("1,2,3,4:0.5") == MaskRegion(1, 2, 3, 4, 0.5)
    with pytest.raises(ConfigError):
        MaskRegion.parse("1,2,3")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=15), st.integers(0, 10), st.integers(0, 10))
def test_masking_before_or_after_dedup(pattern, x, y):
    # a static overlay: the same region in every frame
    rng = np.random.default_rng(sum(pattern))
    pool = unique_frames(rng, 4, (16, 16))
    frames = [pool[i] for i in pattern]
    region = [MaskRegion(x, y, 6, 6, 1.0)]
    kept_after = deduplicate(frames)[0]
    kept_before = deduplicate([apply_mask(f, region) for f in frames])[0]
    # masking can only merge frames that differ solely inside the overlay
    assert kept_before == kept_after or set(kept_before) <= set(kept_after)
    masked_pool = [apply_mask(p, region) for p in pool]
    if all(np.abs(masked_pool[i] - masked_pool[j]).mean() > 1 / 255 for i in range(4) for j in range(i)):
        assert kept_before == kept_after


def test_triplet_counts():
    frames = [np.zeros((2, 2))] * 100
    assert len(extract_triplets(frames[:5], 1)) == 3
    assert len(extract_triplets(frames[:3], 1)) == 1
    assert len(extract_triplets(frames, 2)) == 49
    with pytest.raises(DataError):
        extract_triplets(frames[:2])
    with pytest.raises(ConfigError):
        extract_triplets(frames, 0)


def test_triplets_are_consecutive(rng):
    frames = unique_frames(rng, 7, (3, 3))
    trips = extract_triplets(frames, 2, indices=[10, 11, 13, 14, 16, 17, 19])
    for n, t in enumerate(trips):
        i = 2 * n
        np.testing.assert_array_equal(t.prev, frames[i])
        np.testing.assert_array_equal(t.mid, frames[i + 1])
        np.testing.assert_array_equal(t.next, frames[i + 2])
    assert [t.frame_index for t in trips] == [11, 14, 17]


def test_flip_group(rng):
    trip = Triplet(*unique_frames(rng, 3, (4, 5)))
    out = augment_flips(trip)
    assert [tag for tag, _ in out] == ["id", "h", "v", "hv"]
    h = dict(out)["h"]
    hh = dict(augment_flips(h))["h"]
    for a, b in zip((hh.prev, hh.mid, hh.next), (trip.prev, trip.mid, trip.next)):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(dict(out)["v"].mid, trip.mid)
    np.testing.assert_array_equal(dict(out)["hv"].next, trip.next[::-1, ::-1])


def test_manifest_roundtrip_and_subset(tmp_path):
    entries = [ManifestEntry("clipA", (i, i + 1, i + 2), "id") for i in range(50)]
    write_manifest(entries, tmp_path / "m.txt")
    assert read_manifest(tmp_path / "m.txt") == entries
    a = sample_subset(entries, 10, seed=4)
    assert a == sample_subset(entries, 10, seed=4)
    assert a != sample_subset(entries, 10, seed=5)
    assert len(set(a)) == 10 and a == sorted(a, key=entries.index)
    with pytest.raises(DataError):
        sample_subset(entries, 51, seed=0)
    with pytest.raises(FormatError):
        ManifestEntry.parse("clip 1,2 id")


def test_triplet_tree_roundtrip(tmp_path, rng):
    frames = [rng.integers(0, 256, (5, 6)) / 255.0 for _ in range(5)]
    trips = extract_triplets(frames, 1, source_id="c1")
    write_triplet_tree(trips, tmp_path, clip="c1")
    assert sorted(p.name for p in (tmp_path / "c1" / "000000").iterdir()) == ["0.pgm", "1.pgm", "2.pgm"]
    back = read_triplet_tree(tmp_path)
    assert len(back) == 3
    np.testing.assert_array_equal(back[2].next, frames[4])
    assert back[0].source_id == "c1"


def test_list_frames_orders_numerically(tmp_path):
    for n in (10, 2, 1):
        save_frame(np.zeros((2, 2)), tmp_path / f"f{n}.pgm")
    assert [p.name for p in list_frames(tmp_path)] == ["f1.pgm", "f2.pgm", "f10.pgm"]
    (tmp_path / "other").mkdir()
    with pytest.raises(DataError):
        list_frames(tmp_path / "other")
