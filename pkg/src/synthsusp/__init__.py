"""Synthesis-based anomaly scoring for two-channel (T2W/ADC) 2D images.

Obstruct a candidate region, re-synthesize it from its surroundings, and
average original-vs-synthesized distances over a collection of candidate
regions. Includes ROC/FROC evaluation, a report gate and a seeded phantom.
"""
from .errors import SynthSuspError
from .grid import ADC, T2W, ImageGrid, NormalizedGrid, load_grid, normalize, save_grid
from .masks import MaskCollection, RoiMask, build_prevalence, load_mask_collection, place_mask
from .report import classify, classify_text, split_sections
from .suspicion import SuspiciousnessMap, infer_many, infer_suspiciousness, ssim_map
from .synthesis import SynthesisRequest, get_synthesizer, synthesize_harmonic, synthesize_meanfill

__version__ = "0.1.0"

__all__ = [
    "ADC", "T2W", "ImageGrid", "NormalizedGrid", "MaskCollection", "RoiMask", "SuspiciousnessMap",
    "SynthSuspError", "SynthesisRequest", "build_prevalence", "classify", "classify_text",
    "get_synthesizer", "infer_many", "infer_suspiciousness", "load_grid", "load_mask_collection",
    "normalize", "place_mask", "save_grid", "split_sections", "ssim_map", "synthesize_harmonic",
    "synthesize_meanfill",
]
