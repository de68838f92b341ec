"""Original-vs-synthesized distances and prevalence-normalized suspiciousness."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeMismatchError, SynthesisError, SynthSuspError
from .grid import ADC, T2W, ImageGrid, NormalizedGrid
from .masks import MaskCollection, RoiMask, place_collection, prevalence_of
from .synthesis import SolverStats, SynthesisResult, Synthesizer, obstruct

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DATA_RANGE = 1.0


@dataclass(frozen=True, eq=False)
class DistanceMap:
    values: np.ndarray
    support: np.ndarray


@dataclass(frozen=True, eq=False)
class SuspiciousnessMap:
    """Per-pixel suspiciousness; ``valid`` marks pixels with prevalence > 0.

    Carries the grid geometry so that masks can be placed on it directly.
    """

    values: np.ndarray
    valid: np.ndarray
    spacing: Tuple[float, float]
    origin: Tuple[float, float] = (0.0, 0.0)
    center: Optional[Tuple[float, float]] = None
    mask_stats: Tuple[SolverStats, ...] = field(default=())

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def to_grid(self, channel: str = "SUSP") -> ImageGrid:
        return ImageGrid(self.values, (channel,), self.spacing, self.origin, self.center)


# ------------------------------------------------------------------------ SSIM


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian taps; the 2D window is their outer product."""
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _blur(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # 'reflect' repeats the edge sample (d c b a | a b c d)
    return correlate1d(correlate1d(img, taps, axis=0, mode="reflect"), taps, axis=1, mode="reflect")


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = DATA_RANGE) -> np.ndarray:
    """Per-pixel SSIM of two 2D images under a Gaussian window.

    Window 11x11, sigma 1.5, K1 = 0.01, K2 = 0.03; borders are handled by
    symmetric reflection so every pixel gets a full window.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"SSIM inputs differ in shape: {x.shape} vs {y.shape}")
    taps = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_x = _blur(x, taps)
    mu_y = _blur(y, taps)
    var_x = _blur(x * x, taps) - mu_x * mu_x
    var_y = _blur(y * y, taps) - mu_y * mu_y
    cov = _blur(x * y, taps) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def _check(ori: NormalizedGrid, syn: SynthesisResult, mask: RoiMask, channel: str) -> int:
    if syn.values.shape != ori.data.shape:
        raise ShapeMismatchError(f"synthesis shape {syn.values.shape} vs image {ori.data.shape}")
    if mask.bits.shape != ori.shape:
        raise ShapeMismatchError(f"mask shape {mask.bits.shape} vs image {ori.shape}")
    return ori.channels.index(channel)


def dist_t2w_ssim(ori: NormalizedGrid, syn: SynthesisResult, mask: RoiMask) -> DistanceMap:
    """``clamp(1 - SSIM, 0, 2)`` on the T2W channel, kept only inside the mask."""
    k = _check(ori, syn, mask, T2W)
    d = np.clip(1.0 - ssim_map(ori.data[k], syn.values[k]), 0.0, 2.0)
    return DistanceMap(np.where(mask.bits, d, 0.0), mask.bits)


def dist_adc_increment(ori: NormalizedGrid, syn: SynthesisResult, mask: RoiMask) -> DistanceMap:
    """How much brighter the synthesized ADC is than the original, inside the mask."""
    k = _check(ori, syn, mask, ADC)
    d = np.maximum(syn.values[k] - ori.data[k].astype(np.float64), 0.0)
    return DistanceMap(np.where(mask.bits, d, 0.0), mask.bits)


Distance = Callable[[NormalizedGrid, SynthesisResult, RoiMask], DistanceMap]

DISTANCES: Dict[str, Distance] = {
    "ssim": dist_t2w_ssim,
    "adc-incr": dist_adc_increment,
}


def get_distance(name: Union[str, Distance]) -> Distance:
    if callable(name):
        return name
    try:
        return DISTANCES[name]
    except KeyError:
        raise ValueError(f"unknown distance {name!r}; choose from {sorted(DISTANCES)}") from None


# ------------------------------------------------------------------ inference


def infer_many(image: NormalizedGrid, collection: MaskCollection, synthesizer: Synthesizer,
               distances: Sequence[Union[str, Distance]], workers: int = 1) -> dict:
    """Suspiciousness maps for several distances from one pass of syntheses.

    Each mask is obstructed and synthesized once; every requested distance is
    evaluated on the same synthesis. The result is keyed by the items of
    ``distances`` (names or callables). Sums are float64 and combined in
    canonical mask order whatever ``workers`` is.
    """
    placed = place_collection(collection, image)
    prevalence = prevalence_of(placed, image.spacing).counts
    funcs = [get_distance(d) for d in distances]

    def one(i_mask):
        i, mask = i_mask
        try:
            syn = synthesizer(obstruct(image, mask))
        except SynthSuspError as exc:
            raise SynthesisError(f"mask {i}: {exc}") from exc
        return syn.stats, [f(image, syn, mask).values for f in funcs]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, enumerate(placed)))
    else:
        results = [one(item) for item in enumerate(placed)]

    sums = [np.zeros(image.shape) for _ in funcs]
    for _, maps in results:
        for acc, d in zip(sums, maps):
            acc += d
    valid = prevalence > 0
    stats = tuple(s for s, _ in results)
    out = {}
    for name, acc in zip(distances, sums):
        values = np.zeros(image.shape)
        values[valid] = acc[valid] / prevalence[valid]
        out[name] = SuspiciousnessMap(values, valid, image.spacing, image.origin, image.center, stats)
    return out


def infer_suspiciousness(image: NormalizedGrid, collection: MaskCollection, synthesizer: Synthesizer,
                         distance: Union[str, Distance] = "adc-incr", workers: int = 1) -> SuspiciousnessMap:
    """Average the per-mask distances over the prevalence at each pixel.

    Pixels covered by no mask get 0 and ``valid=False``.
    """
    return infer_many(image, collection, synthesizer, [distance], workers)[distance]
