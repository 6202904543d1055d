import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diverse_inpaint.masks import generate_irregular_mask
from diverse_inpaint.metrics import (
    PSNR_CAP,
    SampleBatch,
    diversity_score,
    psnr,
    rank_samples,
    ssim,
    to_unit,
)
from diverse_inpaint.network import FeaturePyramid
from oracles import diversity_formula, psnr_formula, ssim_formula

PYR = FeaturePyramid(channels=(4, 4, 4, 4, 4))


def test_psnr_oracle(rng):
    for _ in range(5):
        a, b = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        assert abs(psnr(a, b) - psnr_formula(a, b)) <= 1e-9


def test_psnr_known_value():
    a = np.zeros((1, 4, 4))
    assert psnr(a, a + 0.1) == pytest.approx(20.0)


def test_psnr_cap_and_shape_check(rng):
    a = rng.random((3, 16, 16))
    assert psnr(a, a) == PSNR_CAP
    assert psnr(a, a + 1e-12) == PSNR_CAP
    with pytest.raises(ValueError):
        psnr(a, a[:, :8])


def test_ssim_oracle(rng):
    for _ in range(3):
        a, b = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        assert abs(ssim(a, b) - ssim_formula(a, b)) <= 1e-9


def test_ssim_identity_and_errors(rng):
    a = rng.random((3, 16, 16))
    assert ssim(a, a) == 1.0
    assert ssim(a, 1 - a) < 0.5
    with pytest.raises(ValueError):
        ssim(a, a[:, :, :12])
    with pytest.raises(ValueError):
        ssim(a[:, :4, :4], a[:, :4, :4])


def test_to_unit():
    assert to_unit(np.array([-1.0, 0.0, 1.0])).tolist() == [0.0, 0.5, 1.0]


@pytest.mark.parametrize("masked", [False, True])
def test_diversity_oracle(rng, masked):
    mask = generate_irregular_mask(16, 16, "30-40", 2)
    samples = [rng.uniform(-1, 1, size=(3, 16, 16)) for _ in range(3)]
    got = diversity_score(samples, mask, PYR, masked=masked)
    assert abs(got - diversity_formula(samples, mask, PYR, masked)) <= 1e-9


def test_diversity_zero_for_identical_and_background_only_changes(rng):
    mask = generate_irregular_mask(16, 16, "30-40", 2)
    a = rng.uniform(-1, 1, size=(3, 16, 16))
    assert diversity_score([a, a.copy()], mask, PYR) == 0.0
    b = np.where(mask == 1, rng.uniform(-1, 1, size=a.shape), a)
    assert diversity_score([a, b], mask, PYR, masked=True) == 0.0
    assert diversity_score([a, b], mask, PYR, masked=False) > 0.0
    with pytest.raises(ValueError):
        diversity_score([a], mask, PYR)


def test_rank_samples_plain_scores():
    assert rank_samples([0.1, 0.5, 0.5, -1.0], 3) == [1, 2, 0]
    assert rank_samples([0.1], 0) == []
    with pytest.raises(ValueError):
        rank_samples([0.1], 2)


def test_rank_samples_batches():
    batch = [SampleBatch(None, None, None, None, s, index=i) for i, s in enumerate([3.0, 1.0, 2.0])]
    assert rank_samples(batch, 2) == [0, 2]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30), st.data())
def test_rank_samples_agrees_with_full_sort(scores, data):
    k = data.draw(st.integers(0, len(scores)))
    full = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    assert rank_samples(scores, k) == full[:k]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_symmetric_and_bounded(seed):
    r = np.random.default_rng(seed)
    a, b = r.random((3, 16, 16)), r.random((3, 16, 16))
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-15)
    assert -1.0 <= s <= 1.0
