"""Seeded synthetic T2W/ADC cases with planted low-ADC lesions.

Backgrounds are smooth random fields, so a harmonic fill reconstructs
negative cases well while planted lesions stand out in the ADC channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np
from scipy.ndimage import binary_dilation, gaussian_filter

from .errors import PhantomError
from .grid import PIPELINE_CHANNELS, ImageGrid, geometric_center
from .masks import MaskCollection, RoiMask, build_prevalence, mask_in_frame

GENERATOR_ID = "numpy.random.PCG64"
MAX_PLACEMENT_ATTEMPTS = 1000
BACKGROUND_RANGE = (0.2, 0.8)


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    shape: Tuple[int, int] = (128, 128)
    spacing: Tuple[float, float] = (0.625, 0.625)
    n_lesions: int = 0
    lesion_radius_mm: Tuple[float, float] = (2.5, 5.0)
    adc_drop: float = 0.5
    background_smoothness: float = 4.0  # Gaussian blur sigma, mm
    t2w_texture: float = 0.05           # std of the T2W perturbation inside lesions
    noise_sigma: float = 0.05           # white noise added to both channels

    def __post_init__(self):
        if len(self.shape) != 2 or min(self.shape) < 1:
            raise PhantomError(f"shape must be two positive ints, got {self.shape}")
        if min(self.spacing) <= 0:
            raise PhantomError(f"spacing must be positive, got {self.spacing}")
        if not 0 < self.adc_drop <= 1:
            raise PhantomError(f"adc_drop must lie in (0, 1], got {self.adc_drop}")
        lo, hi = self.lesion_radius_mm
        if not 0 < lo <= hi:
            raise PhantomError(f"lesion radius range must be ordered and positive, got {self.lesion_radius_mm}")
        if self.n_lesions < 0 or self.background_smoothness < 0 or self.noise_sigma < 0:
            raise PhantomError("n_lesions, background_smoothness and noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class PhantomCase:
    image: ImageGrid
    truth_rois: Tuple[RoiMask, ...]
    label: str
    spec: PhantomSpec = field(default_factory=PhantomSpec)

    @property
    def case_id(self) -> str:
        return f"{self.label[:3]}-{self.spec.seed:06d}"


def phantom_frame(spec: PhantomSpec) -> ImageGrid:
    """An empty two-channel grid with the phantom geometry."""
    h, w = spec.shape
    return ImageGrid(np.zeros((2, h, w), np.float32), PIPELINE_CHANNELS, spec.spacing,
                     (0.0, 0.0), geometric_center(spec.shape, spec.spacing))


def smooth_field(rng: np.random.Generator, spec: PhantomSpec) -> np.ndarray:
    noise = rng.standard_normal(spec.shape)
    sigma = (spec.background_smoothness / spec.spacing[1], spec.background_smoothness / spec.spacing[0])
    field_ = gaussian_filter(noise, sigma=sigma, mode="reflect")
    lo, hi = field_.min(), field_.max()
    a, b = BACKGROUND_RANGE
    if hi == lo:
        return np.full(spec.shape, (a + b) / 2)
    return a + (field_ - lo) / (hi - lo) * (b - a)


def ellipse_bits(shape, spacing, center_rc, radii_mm, angle) -> np.ndarray:
    rows, cols = np.indices(shape)
    x = (cols - center_rc[1]) * spacing[0]
    y = (rows - center_rc[0]) * spacing[1]
    u = x * np.cos(angle) + y * np.sin(angle)
    v = -x * np.sin(angle) + y * np.cos(angle)
    return (u / radii_mm[0]) ** 2 + (v / radii_mm[1]) ** 2 <= 1.0


def _place_lesions(rng, spec: PhantomSpec, support: np.ndarray) -> List[np.ndarray]:
    candidates = np.argwhere(support)
    lesions: List[np.ndarray] = []
    occupied = np.zeros(spec.shape, dtype=bool)
    for k in range(spec.n_lesions):
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            center = candidates[rng.integers(len(candidates))]
            radii = rng.uniform(*spec.lesion_radius_mm, size=2)
            angle = rng.uniform(0.0, np.pi)
            bits = ellipse_bits(spec.shape, spec.spacing, center, radii, angle)
            if bits.any() and not (bits & ~support).any() and not (bits & occupied).any():
                lesions.append(bits)
                occupied |= binary_dilation(bits)
                break
        else:
            raise PhantomError(
                f"seed {spec.seed}: lesion {k} could not be placed inside the prevalence support "
                f"after {MAX_PLACEMENT_ATTEMPTS} attempts")
    return lesions


def generate_case(spec: PhantomSpec, collection: MaskCollection) -> PhantomCase:
    """Build one case; a pure function of ``spec`` and ``collection``.

    Draw order from the seeded generator: T2W background, ADC background,
    lesions, lesion texture, noise. A negative and a positive case with the
    same seed therefore share their backgrounds.
    """
    rng = np.random.default_rng(spec.seed)
    frame = phantom_frame(spec)
    support = build_prevalence(collection, frame).support
    if not support.any():
        raise PhantomError("collection prevalence is empty on the phantom grid")

    t2w = smooth_field(rng, spec)
    adc = smooth_field(rng, spec)
    lesions = _place_lesions(rng, spec, support)
    for bits in lesions:
        adc[bits] *= 1.0 - spec.adc_drop
        t2w[bits] += spec.t2w_texture * rng.standard_normal(int(bits.sum()))
    if spec.noise_sigma > 0:
        t2w += spec.noise_sigma * rng.standard_normal(spec.shape)
        adc += spec.noise_sigma * rng.standard_normal(spec.shape)

    image = frame.replace(data=np.stack([t2w, adc]))
    rois = tuple(mask_in_frame(bits, frame) for bits in lesions)
    return PhantomCase(image, rois, "positive" if rois else "negative", spec)


def generate_cohort(base_spec: PhantomSpec, n_pos: int, n_neg: int,
                    collection: MaskCollection) -> List[PhantomCase]:
    """Positives first, then negatives; case ``i`` uses seed ``base_spec.seed + i``."""
    if n_pos < 0 or n_neg < 0:
        raise PhantomError("case counts must be >= 0")
    return [generate_case(cohort_spec(base_spec, i, n_pos), collection) for i in range(n_pos + n_neg)]


def cohort_spec(base_spec: PhantomSpec, index: int, n_pos: int) -> PhantomSpec:
    n_lesions = max(base_spec.n_lesions, 1) if index < n_pos else 0
    return replace(base_spec, seed=base_spec.seed + index, n_lesions=n_lesions)


def candidate_lattice(spacing=(0.625, 0.625), anchor_step_mm: float = 5.0,
                      extent_mm: float = 15.0, radius_mm: float = 6.25) -> MaskCollection:
    """Disc-shaped ROI candidates on a square lattice of anchors.

    Anchors lie within ``extent_mm`` of the center, ``anchor_step_mm``
    apart; this stands in for a library of observed lesion outlines.
    """
    dx, dy = spacing
    rr, rc = int(np.ceil(radius_mm / dy)), int(np.ceil(radius_mm / dx))
    r, c = np.mgrid[-rr:rr + 1, -rc:rc + 1]
    disc = (r * dy) ** 2 + (c * dx) ** 2 <= radius_mm ** 2
    n = int(np.floor(extent_mm / anchor_step_mm + 1e-9))
    masks = []
    for iy in range(-n, n + 1):
        for ix in range(-n, n + 1):
            ax, ay = ix * anchor_step_mm, iy * anchor_step_mm
            if ax * ax + ay * ay <= extent_mm ** 2 + 1e-9:
                masks.append(RoiMask(disc, (ax, ay)))
    return MaskCollection(tuple(masks), None, (float(dx), float(dy)))
