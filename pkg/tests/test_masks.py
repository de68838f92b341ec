import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_grid
from synthsusp.errors import MaskError, PlacementError
from synthsusp.masks import (MaskCollection, RoiMask, build_prevalence, load_mask_collection, mask_in_frame,
                             place_collection, place_mask, rle_decode, rle_encode, save_mask_collection)


def disc(r):
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r


def frame(n=64, spacing=0.625):
    return make_grid(np.zeros((2, n, n)), spacing=(spacing, spacing))


def test_reference_pixel_rounds_half_up():
    bits = np.zeros((4, 4), bool)
    bits[1, 1] = bits[1, 2] = True  # centroid col 1.5
    assert RoiMask(bits).reference_pixel() == (1, 2)


def test_empty_mask_rejected():
    with pytest.raises(MaskError):
        RoiMask(np.zeros((3, 3), bool))


def test_symmetric_mask_centered():
    g = make_grid(np.zeros((2, 33, 33)))
    placed = place_mask(RoiMask(disc(3)), g)
    rows, cols = np.nonzero(placed.bits)
    assert rows.mean() == 16 and cols.mean() == 16
    assert placed.area == disc(3).sum()


def test_ten_mm_anchor_shifts_sixteen_pixels():
    g = frame()
    base = place_mask(RoiMask(disc(3)), g)
    moved = place_mask(RoiMask(disc(3), (10.0, 0.0)), g)
    assert np.array_equal(np.roll(base.bits, 16, axis=1), moved.bits)
    down = place_mask(RoiMask(disc(3), (0.0, 10.0)), g)
    assert np.array_equal(np.roll(base.bits, 16, axis=0), down.bits)


def test_off_grid_raises():
    with pytest.raises(PlacementError):
        place_mask(RoiMask(disc(3), (100.0, 0.0)), frame())


def test_partial_clip_keeps_remaining_bits():
    g = frame(32, 1.0)
    placed = place_mask(RoiMask(disc(3), (-15.5, 0.0)), g)
    assert 0 < placed.area < disc(3).sum()
    assert placed.bits[:, 0].any()


def test_missing_center_raises():
    g = frame().replace(center=None)
    with pytest.raises(PlacementError):
        place_mask(RoiMask(disc(2)), g)


def test_mask_in_frame_round_trip(rng):
    g = frame(40, 0.7)
    bits = rng.random((40, 40)) > 0.9
    assert np.array_equal(place_mask(mask_in_frame(bits, g), g).bits, bits)


def test_prevalence_identical_and_disjoint():
    g = frame(32, 1.0)
    a = RoiMask(disc(2))
    twice = build_prevalence(MaskCollection((a, a)), g)
    once = place_mask(a, g).bits
    assert np.array_equal(twice.counts, 2 * once)
    b = RoiMask(disc(2), (8.0, 0.0))
    both = build_prevalence(MaskCollection((a, b)), g)
    assert both.counts.max() == 1
    assert np.array_equal(both.counts, once.astype(int) + place_mask(b, g).bits)


def random_masks(rng, k, size=16, max_anchor=10.0):
    out = []
    for _ in range(k):
        bits = rng.random((rng.integers(1, size + 1), rng.integers(1, size + 1))) > 0.5
        if not bits.any():
            bits[0, 0] = True
        out.append((bits, tuple(rng.uniform(-max_anchor, max_anchor, 2))))
    return out


def test_prevalence_matches_brute_force(rng):
    g = make_grid(np.zeros((2, 16, 16)))
    masks = random_masks(rng, 5, size=8, max_anchor=3.0)
    coll = MaskCollection(tuple(RoiMask(b, a) for b, a in masks))
    expected = oracles.prevalence(masks, g.shape, g.spacing, g.center)
    assert np.array_equal(build_prevalence(coll, g).counts, expected)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_prevalence_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    g = make_grid(np.zeros((2, 24, 24)))
    masks = [RoiMask(b, a) for b, a in random_masks(rng, 6, size=6, max_anchor=5.0)]
    perm = rng.permutation(len(masks))
    p1 = build_prevalence(MaskCollection(tuple(masks)), g).counts
    p2 = build_prevalence(MaskCollection(tuple(masks[i] for i in perm)), g).counts
    assert np.array_equal(p1, p2)


@settings(max_examples=30, deadline=None)
@given(a=st.tuples(st.integers(-6, 6), st.integers(-6, 6)), b=st.tuples(st.integers(-6, 6), st.integers(-6, 6)))
def test_anchor_offsets_compose(a, b):
    g = make_grid(np.zeros((2, 64, 64)), spacing=(0.625, 0.625))
    step = 0.625
    m = RoiMask(disc(2))
    first = place_mask(RoiMask(m.bits, (a[0] * step, a[1] * step)), g)
    again = place_mask(RoiMask(first.bits, (a[0] * step + b[0] * step, a[1] * step + b[1] * step)), g)
    direct = place_mask(RoiMask(m.bits, ((a[0] + b[0]) * step, (a[1] + b[1]) * step)), g)
    assert np.array_equal(again.bits, direct.bits)


def test_collection_spacing_checked():
    coll = MaskCollection((RoiMask(disc(2)),), None, (1.0, 1.0))
    with pytest.raises(PlacementError):
        place_collection(coll, frame(32, 0.625))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=60), st.integers(1, 6))
def test_rle_round_trip(flat, w):
    n = len(flat) - len(flat) % w or w
    bits = np.array((flat * w)[:n]).reshape(-1, w)
    runs = rle_encode(bits)
    assert sum(runs) == bits.size
    assert np.array_equal(rle_decode(runs, w, bits.shape[0]), bits)


def test_rle_starts_with_zero_run():
    assert rle_encode(np.array([[True, True, False]])) == [0, 2, 1]
    assert rle_encode(np.array([[False, True]])) == [1, 1]


def test_file_round_trip_preserves_order(tmp_path):
    masks = tuple(RoiMask(disc(r), (r * 1.5, -r)) for r in (1, 3, 2))
    path = tmp_path / "m.smask"
    save_mask_collection(MaskCollection(masks), path)
    back = load_mask_collection(path)
    assert len(back) == 3
    assert all(x == y for x, y in zip(back, masks))


@pytest.mark.parametrize("entry", [
    {"width": 2, "height": 1, "anchor_mm": [0, 0], "rle": [2]},          # no set bits
    {"width": 2, "height": 1, "anchor_mm": [0, 0], "rle": [1, 2]},       # runs too long
    {"width": 2, "height": 1, "anchor_mm": [0], "rle": [1, 1]},
    {"width": 2, "height": 1, "anchor_mm": [0, 0], "rle": [1, 1], "x": 1},
])
def test_invalid_entries(tmp_path, entry):
    path = tmp_path / "bad.smask"
    path.write_text(json.dumps([entry]))
    with pytest.raises(MaskError):
        load_mask_collection(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "e.smask"
    path.write_text("[]")
    with pytest.raises(MaskError):
        load_mask_collection(path)
