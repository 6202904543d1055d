import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from diverse_inpaint import masks as mk
from oracles import hard_map_bfs, mask_update_scan, random_blob_mask

binary_masks = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1))


@pytest.mark.parametrize("bucket", ["10-20", "20-30", "30-40", "40-50"])
def test_generated_mask_lands_in_bucket(bucket):
    lo, hi = mk.parse_bucket(bucket)
    for seed in range(5):
        m = mk.generate_irregular_mask(64, 64, bucket, seed)
        assert m.dtype == np.uint8 and set(np.unique(m)) <= {0, 1}
        assert lo <= mk.hole_fraction(m) <= hi


def test_generated_mask_is_deterministic():
    a = mk.generate_irregular_mask(32, 48, "30-40", 7)
    assert np.array_equal(a, mk.generate_irregular_mask(32, 48, "30-40", 7))
    assert not np.array_equal(a, mk.generate_irregular_mask(32, 48, "30-40", 8))


def test_mask_generation_errors(monkeypatch):
    with pytest.raises(ValueError):
        mk.generate_irregular_mask(64, 64, "50-60", 0)
    with pytest.raises(ValueError):
        mk.generate_irregular_mask(8, 64, "10-20", 0)
    # a brush that covers the whole canvas always overshoots
    monkeypatch.setattr(mk, "_stroke", lambda h, w, rng: np.ones((h, w), dtype=bool))
    with pytest.raises(mk.MaskGenerationError):
        mk.generate_irregular_mask(16, 16, "10-20", 0)


def test_parse_bucket_accepts_percent():
    assert mk.parse_bucket("10-20%") == mk.parse_bucket("10-20") == (0.1, 0.2)


def test_as_mask_rejects_non_binary():
    with pytest.raises(ValueError):
        mk.as_mask(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        mk.as_mask(np.zeros(3))


def test_mask_update_single_hole_pixel_fills():
    m = np.ones((5, 5), dtype=np.uint8)
    m[2, 2] = 0
    assert np.all(mk.mask_update(m) == 1)


def test_mask_update_grows_background_by_one_ring():
    m = np.zeros((7, 7), dtype=np.uint8)
    m[3, 3] = 1
    out = mk.mask_update(m)
    assert out.sum() == 9 and np.all(out[2:5, 2:5] == 1)


def test_mask_update_all_hole_stays_hole():
    assert mk.mask_update(np.zeros((4, 4), dtype=np.uint8)).sum() == 0


def test_mask_update_matches_scan_on_random_masks(rng):
    for _ in range(20):
        m = random_blob_mask(rng, 16, 16, p=rng.uniform(0.6, 0.98))
        assert np.array_equal(mk.mask_update(m), mask_update_scan(m))


def test_mask_update_batched(rng):
    ms = np.stack([random_blob_mask(rng, 8, 8, 0.9) for _ in range(3)])
    out = mk.mask_update(ms)
    for i in range(3):
        assert np.array_equal(out[i], mask_update_scan(ms[i]))


def test_hard_map_rings_step_by_k():
    m = np.ones((9, 9), dtype=np.uint8)
    m[2:7, 2:7] = 0
    d = mk.hard_diversity_map(m, 2, 4.0)
    assert d[0, 0] == 1.0
    assert d[2, 2] == 0.25
    assert d[3, 3] == 0.0625
    assert d[4, 4] == 0.0625
    assert set(np.unique(d)) == {1.0, 0.25, 0.0625}


def test_hard_map_all_background_is_white():
    assert np.all(mk.hard_diversity_map(np.ones((8, 8), dtype=np.uint8), 4) == 1.0)


def test_hard_map_all_hole_is_floor():
    assert np.all(mk.hard_diversity_map(np.zeros((6, 6), dtype=np.uint8), 3, 4.0) == 4.0 ** -3)


def test_hard_map_matches_bfs(rng):
    for n in (1, 2, 4):
        for _ in range(10):
            m = random_blob_mask(rng, 12, 12, rng.uniform(0.5, 0.95))
            assert np.array_equal(mk.hard_diversity_map(m, n), hard_map_bfs(m, n))


def test_hard_map_bad_args():
    with pytest.raises(ValueError):
        mk.hard_diversity_map(np.ones((4, 4)), 0)
    with pytest.raises(ValueError):
        mk.hard_diversity_map(np.ones((4, 4)), 2, 1.0)


def test_hard_map_config_validation():
    with pytest.raises(ValueError):
        mk.HardMapConfig(k=0.5)
    with pytest.raises(ValueError):
        mk.HardMapConfig(n_schedule=(2, 0))


def test_downsample_all_of_block():
    m = np.ones((4, 4), dtype=np.uint8)
    m[0, 0] = 0
    assert mk.downsample_mask(m, 2).tolist() == [[0, 1], [1, 1]]
    assert mk.downsample_mask(m, 4).tolist() == [[0]]
    with pytest.raises(ValueError):
        mk.downsample_mask(m, 3)


def test_stage_maps_deepest_first():
    m = mk.generate_irregular_mask(32, 32, "30-40", 3)
    maps = mk.hard_maps_for_stages(m, [(4, 4), (8, 8), (16, 16), (32, 32)], mk.HardMapConfig(n_schedule=(1, 2, 3, 4)))
    assert [x.shape for x in maps] == [(4, 4), (8, 8), (16, 16), (32, 32)]
    assert maps[-1].min() >= 4.0 ** -4


@settings(max_examples=60, deadline=None)
@given(binary_masks)
def test_mask_update_property_matches_scan(m):
    assert np.array_equal(mk.mask_update(m), mask_update_scan(m))


@settings(max_examples=60, deadline=None)
@given(binary_masks)
def test_mask_update_is_monotone_and_idempotent_on_fixed_points(m):
    out = mk.mask_update(m)
    assert np.all(out >= m)
    if m.all() or not m.any():
        assert np.array_equal(out, m)


@settings(max_examples=60, deadline=None)
@given(binary_masks, st.integers(1, 5), st.sampled_from([2.0, 4.0, 3.0]))
def test_hard_map_property(m, n, k):
    d = mk.hard_diversity_map(m, n, k)
    assert np.array_equal(d, hard_map_bfs(m, n, k))
    assert np.all(d[m == 1] == 1.0)
    assert np.all((d > 0) & (d <= 1))
