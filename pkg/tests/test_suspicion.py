import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_grid
from synthsusp.masks import MaskCollection, RoiMask, place_mask
from synthsusp.suspicion import (dist_adc_increment, dist_t2w_ssim, infer_many, infer_suspiciousness, ssim_map)
from synthsusp.synthesis import SynthesisResult, synthesize_harmonic, synthesize_meanfill


def full_mask(shape):
    return RoiMask(np.ones(shape, bool))


def as_result(data):
    return SynthesisResult(np.asarray(data, dtype=np.float64))


def test_ssim_identity_and_symmetry(rng):
    x, y = rng.random((2, 40, 40))
    assert np.all(ssim_map(x, x) == 1.0)
    assert np.abs(ssim_map(x, y) - ssim_map(y, x)).max() <= 1e-12


def test_ssim_matches_direct_formula(rng):
    x = rng.random((24, 24))
    y = np.clip(x + 0.2 * rng.standard_normal((24, 24)), 0, 1)
    assert np.abs(ssim_map(x, y) - oracles.ssim_direct(x, y)).max() < 1e-9


def test_ssim_distance_zero_when_equal(rng):
    g = make_grid(rng.random((2, 16, 16)))
    d = dist_t2w_ssim(g, as_result(g.data), full_mask((16, 16)))
    assert np.abs(d.values).max() <= 1e-9


def test_flipped_pixel_neighborhood():
    ori = make_grid(np.full((2, 31, 31), 0.5))
    syn = np.full((2, 31, 31), 0.5)
    syn[0, 15, 15] = 1.0
    d = dist_t2w_ssim(ori, as_result(syn), full_mask((31, 31))).values
    rows, cols = np.indices(d.shape)
    near = (np.abs(rows - 15) <= 5) & (np.abs(cols - 15) <= 5)
    assert np.all(d[near] > 0)
    assert np.all(d[~near] == 0)


def test_ssim_distance_on_noise_in_range(rng):
    a, b = rng.random((2, 2, 32, 32))
    d = dist_t2w_ssim(make_grid(a), as_result(b), full_mask((32, 32)))
    assert 0 < d.values.mean() <= 2


def test_distance_restricted_to_mask(rng):
    a = make_grid(rng.random((2, 16, 16)))
    bits = np.zeros((16, 16), bool)
    bits[4:9, 3:12] = True
    syn = as_result(rng.random((2, 16, 16)))
    for dist in (dist_t2w_ssim, dist_adc_increment):
        d = dist(a, syn, RoiMask(bits))
        assert np.all(d.values[~bits] == 0)


def test_adc_increment_examples():
    ori = np.full((2, 4, 4), 0.3)
    g = make_grid(ori)
    mask = full_mask((4, 4))
    assert np.all(dist_adc_increment(g, as_result(g.data), mask).values == 0)
    darker = g.data.astype(float)
    darker[1] -= 0.1
    assert np.all(dist_adc_increment(g, as_result(darker), mask).values == 0)
    brighter = g.data.astype(float)
    brighter[1, 2, 2] = 0.7
    d = dist_adc_increment(g, as_result(brighter), mask).values
    assert d[2, 2] == pytest.approx(0.4, abs=1e-7)
    assert d.sum() == d[2, 2]


def disc(r):
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def test_single_mask_equals_its_distance(rng):
    g = make_grid(rng.random((2, 20, 20)))
    m = RoiMask(disc(3), (1.0, -2.0))
    susp = infer_suspiciousness(g, MaskCollection((m,)), synthesize_harmonic)
    placed = place_mask(m, g)
    from synthsusp.synthesis import obstruct
    d = dist_adc_increment(g, synthesize_harmonic(obstruct(g, placed)), placed).values
    assert np.array_equal(susp.values, d)
    assert np.array_equal(susp.valid, placed.bits)


def test_duplicate_mask_is_idempotent(rng):
    g = make_grid(rng.random((2, 20, 20)))
    m = RoiMask(disc(3))
    one = infer_suspiciousness(g, MaskCollection((m,)), synthesize_meanfill, "ssim")
    two = infer_suspiciousness(g, MaskCollection((m, m)), synthesize_meanfill, "ssim")
    np.testing.assert_allclose(two.values, one.values, rtol=0, atol=1e-15)


def test_meanfill_matches_brute_force(rng):
    g = make_grid(rng.random((2, 16, 16)))
    masks = [(rng.random((5, 6)) > 0.4, tuple(rng.uniform(-4, 4, 2))) for _ in range(5)]
    for bits, _ in masks:
        bits[2, 2] = True
    coll = MaskCollection(tuple(RoiMask(b, a) for b, a in masks))
    susp = infer_suspiciousness(g, coll, synthesize_meanfill, "adc-incr")
    expected, valid = oracles.meanfill_adc_susp(g.data, masks, g.spacing, g.center)
    assert np.array_equal(susp.valid, valid)
    assert np.abs(susp.values - expected).max() <= 1e-9
    assert np.all(susp.values[~susp.valid] == 0)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_mask_order_and_workers_do_not_matter(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(rng.random((2, 18, 18)))
    masks = [RoiMask(disc(int(rng.integers(1, 4))), tuple(rng.uniform(-4, 4, 2))) for _ in range(5)]
    perm = rng.permutation(5)
    a = infer_many(g, MaskCollection(tuple(masks)), synthesize_meanfill, ["ssim", "adc-incr"])
    b = infer_many(g, MaskCollection(tuple(masks[i] for i in perm)), synthesize_meanfill, ["ssim", "adc-incr"],
                   workers=3)
    for k in a:
        np.testing.assert_allclose(a[k].values, b[k].values, rtol=0, atol=1e-12)
        assert np.array_equal(a[k].valid, b[k].valid)


def test_infer_many_agrees_with_single_distance(rng):
    g = make_grid(rng.random((2, 20, 20)))
    coll = MaskCollection((RoiMask(disc(2)), RoiMask(disc(3), (2.0, 1.0))))
    both = infer_many(g, coll, synthesize_harmonic, ["ssim", "adc-incr"], workers=2)
    for name in ("ssim", "adc-incr"):
        single = infer_suspiciousness(g, coll, synthesize_harmonic, name)
        assert np.array_equal(both[name].values, single.values)
    assert len(both["ssim"].mask_stats) == 2


def test_custom_distance_callable(rng):
    g = make_grid(rng.random((2, 12, 12)))
    from synthsusp.suspicion import DistanceMap

    def ones(ori, syn, mask):
        return DistanceMap(mask.bits.astype(float), mask.bits)

    susp = infer_suspiciousness(g, MaskCollection((RoiMask(disc(2)),)), synthesize_meanfill, ones)
    assert np.array_equal(susp.values, susp.valid.astype(float))
