import numpy as np
import pytest

from synthsusp.errors import PhantomError
from synthsusp.masks import build_prevalence, place_mask
from synthsusp.phantom import PhantomSpec, candidate_lattice, generate_case, generate_cohort, phantom_frame


@pytest.fixture(scope="module")
def lattice():
    return candidate_lattice()


def test_lattice_shape(lattice):
    assert len(lattice) == 29
    assert lattice.grid_spacing == (0.625, 0.625)


def test_no_lesions_is_negative(lattice):
    case = generate_case(PhantomSpec(seed=1), lattice)
    assert case.label == "negative" and case.truth_rois == ()
    assert case.image.channels == ("T2W", "ADC")
    assert case.image.center == (79.375 / 2, 79.375 / 2)


def test_same_spec_bit_identical(lattice):
    spec = PhantomSpec(seed=4, n_lesions=2)
    a, b = generate_case(spec, lattice), generate_case(spec, lattice)
    assert a.image == b.image
    assert all(x == y for x, y in zip(a.truth_rois, b.truth_rois))


def test_adc_drop_arithmetic(lattice):
    quiet = dict(noise_sigma=0.0, t2w_texture=0.0)
    neg = generate_case(PhantomSpec(seed=9, **quiet), lattice)
    pos = generate_case(PhantomSpec(seed=9, n_lesions=1, adc_drop=0.5, **quiet), lattice)
    bits = pos.truth_rois[0].bits
    bg, les = neg.image.channel("ADC"), pos.image.channel("ADC")
    np.testing.assert_allclose(les[bits], bg[bits] * 0.5, rtol=1e-6)
    assert np.array_equal(les[~bits], bg[~bits])
    assert np.array_equal(pos.image.channel("T2W"), neg.image.channel("T2W"))


def test_lesions_inside_support_and_disjoint(lattice):
    spec = PhantomSpec(seed=3, n_lesions=3)
    case = generate_case(spec, lattice)
    support = build_prevalence(lattice, phantom_frame(spec)).support
    assert len(case.truth_rois) == 3
    total = np.zeros(spec.shape, int)
    for roi in case.truth_rois:
        assert not (roi.bits & ~support).any()
        assert np.array_equal(place_mask(roi, case.image).bits, roi.bits)
        total += roi.bits
    assert total.max() == 1


def test_lesions_are_darker_in_adc(lattice):
    case = generate_case(PhantomSpec(seed=5, n_lesions=1), lattice)
    adc = case.image.channel("ADC")
    bits = case.truth_rois[0].bits
    assert adc[bits].mean() < adc[~bits].mean()


def test_cohort_labels_and_seeds(lattice):
    cohort = generate_cohort(PhantomSpec(seed=100), 2, 2, lattice)
    assert [c.label for c in cohort] == ["positive", "positive", "negative", "negative"]
    assert [c.spec.seed for c in cohort] == [100, 101, 102, 103]
    assert cohort[0].case_id == "pos-000100"


def test_cohort_seed_dependence(lattice):
    a = generate_cohort(PhantomSpec(seed=1), 1, 1, lattice)
    b = generate_cohort(PhantomSpec(seed=1), 1, 1, lattice)
    c = generate_cohort(PhantomSpec(seed=50), 1, 1, lattice)
    assert all(x.image == y.image for x, y in zip(a, b))
    assert all(not np.array_equal(x.image.data, y.image.data) for x, y in zip(a, c))


def test_impossible_placement_reports_seed(lattice):
    spec = PhantomSpec(seed=11, n_lesions=1, lesion_radius_mm=(30.0, 40.0))
    with pytest.raises(PhantomError, match="seed 11"):
        generate_case(spec, lattice)


@pytest.mark.parametrize("kw", [{"adc_drop": 0.0}, {"shape": (0, 4)}, {"spacing": (0.0, 1.0)},
                                {"lesion_radius_mm": (3.0, 2.0)}, {"n_lesions": -1}])
def test_spec_validation(kw):
    with pytest.raises(PhantomError):
        PhantomSpec(**kw)
