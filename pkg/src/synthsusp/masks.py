"""Binary ROI candidates, placement about the anatomical center, prevalence.

A mask's reference point is the centroid of its set bits, rounded half-up
per axis. Placing a mask puts that reference pixel at
``frame.center + anchor_mm`` (nearest pixel) and clips whatever falls off
the frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MaskError, PlacementError

Pair = Tuple[float, float]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True, eq=False)
class RoiMask:
    """A non-empty binary region with its offset from the anatomical center."""

    bits: np.ndarray
    anchor_mm: Pair = (0.0, 0.0)

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 2 or bits.size == 0:
            raise MaskError(f"mask bits must be a non-empty 2D array, got shape {bits.shape}")
        if not bits.any():
            raise MaskError("mask has no set bits")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "anchor_mm", (float(self.anchor_mm[0]), float(self.anchor_mm[1])))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def area(self) -> int:
        return int(self.bits.sum())

    def reference_pixel(self) -> Tuple[int, int]:
        """(row, col) of the rounded centroid of the set bits."""
        rows, cols = np.nonzero(self.bits)
        return _round_half_up(rows.mean()), _round_half_up(cols.mean())

    def __eq__(self, other):
        if not isinstance(other, RoiMask):
            return NotImplemented
        return self.anchor_mm == other.anchor_mm and np.array_equal(self.bits, other.bits) \
            and self.bits.shape == other.bits.shape

    __hash__ = None


@dataclass(frozen=True)
class MaskCollection:
    """Ordered ROI candidates; iteration order is the canonical order.

    ``grid_spacing``, when known, is the pixel spacing the masks were drawn
    at; placement refuses grids with a different spacing.
    """

    masks: Tuple[RoiMask, ...]
    grid_shape: Optional[Tuple[int, int]] = None
    grid_spacing: Optional[Pair] = None

    def __post_init__(self):
        masks = tuple(self.masks)
        if not masks:
            raise MaskError("mask collection is empty")
        object.__setattr__(self, "masks", masks)

    def __len__(self):
        return len(self.masks)

    def __iter__(self):
        return iter(self.masks)

    def __getitem__(self, i):
        return self.masks[i]


@dataclass(frozen=True, eq=False)
class PrevalenceMap:
    counts: np.ndarray
    spacing: Pair

    @property
    def support(self) -> np.ndarray:
        return self.counts > 0


def place_mask(mask: RoiMask, frame) -> RoiMask:
    """Translate ``mask`` onto the pixel lattice of ``frame``.

    ``frame`` is anything exposing ``height``, ``width``, ``spacing``,
    ``origin`` and ``center`` (an ImageGrid or SuspiciousnessMap). The
    result has the frame's shape and keeps the anchor.
    """
    if frame.center is None:
        raise PlacementError("grid has no anatomical center; cannot place mask")
    dx, dy = frame.spacing
    target_col = _round_half_up((frame.center[0] + mask.anchor_mm[0] - frame.origin[0]) / dx)
    target_row = _round_half_up((frame.center[1] + mask.anchor_mm[1] - frame.origin[1]) / dy)
    ref_row, ref_col = mask.reference_pixel()
    shift_r, shift_c = target_row - ref_row, target_col - ref_col

    h, w = frame.height, frame.width
    out = np.zeros((h, w), dtype=bool)
    # overlap of the shifted mask rectangle with the frame
    r0, r1 = max(0, shift_r), min(h, shift_r + mask.height)
    c0, c1 = max(0, shift_c), min(w, shift_c + mask.width)
    if r0 < r1 and c0 < c1:
        out[r0:r1, c0:c1] = mask.bits[r0 - shift_r:r1 - shift_r, c0 - shift_c:c1 - shift_c]
    if not out.any():
        raise PlacementError(
            f"mask with anchor {mask.anchor_mm} falls entirely outside the {h}x{w} grid")
    return RoiMask(out, mask.anchor_mm)


def mask_in_frame(bits: np.ndarray, frame) -> RoiMask:
    """Wrap frame-sized ``bits`` as a RoiMask whose anchor reproduces them.

    ``place_mask(mask_in_frame(bits, frame), frame)`` returns ``bits``.
    """
    probe = RoiMask(bits)
    r, c = probe.reference_pixel()
    dx, dy = frame.spacing
    anchor = (frame.origin[0] + c * dx - frame.center[0], frame.origin[1] + r * dy - frame.center[1])
    return RoiMask(bits, anchor)


def _check_spacing(collection: MaskCollection, frame):
    if collection.grid_spacing is None:
        return
    if not np.allclose(collection.grid_spacing, frame.spacing, rtol=0, atol=1e-9):
        raise PlacementError(
            f"collection drawn at spacing {collection.grid_spacing}, grid has {frame.spacing}")


def place_collection(collection: MaskCollection, frame) -> List[RoiMask]:
    _check_spacing(collection, frame)
    placed = []
    for i, mask in enumerate(collection):
        try:
            placed.append(place_mask(mask, frame))
        except PlacementError as exc:
            raise PlacementError(f"mask {i}: {exc}") from None
    return placed


def prevalence_of(placed: Iterable[RoiMask], spacing) -> PrevalenceMap:
    placed = list(placed)
    counts = np.zeros(placed[0].bits.shape, dtype=np.int32)
    for m in placed:
        counts += m.bits
    return PrevalenceMap(counts, (float(spacing[0]), float(spacing[1])))


def build_prevalence(collection: MaskCollection, frame) -> PrevalenceMap:
    """Pixelwise count of placed masks covering each pixel."""
    return prevalence_of(place_collection(collection, frame), frame.spacing)


# ------------------------------------------------------------------------ .smask


def rle_encode(bits: np.ndarray) -> List[int]:
    """Row-major run lengths, starting with a (possibly empty) run of zeros."""
    flat = np.asarray(bits, dtype=bool).ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], width: int, height: int) -> np.ndarray:
    if any((not isinstance(r, int)) or isinstance(r, bool) or r < 0 for r in runs):
        raise MaskError("run lengths must be non-negative integers")
    if sum(runs) != width * height:
        raise MaskError(f"runs sum to {sum(runs)}, expected {width * height}")
    values = np.arange(len(runs)) % 2 == 1
    return np.repeat(values, runs).reshape(height, width)


def mask_to_dict(mask: RoiMask) -> dict:
    return {
        "width": mask.width,
        "height": mask.height,
        "anchor_mm": list(mask.anchor_mm),
        "rle": rle_encode(mask.bits),
    }


def mask_from_dict(entry) -> RoiMask:
    if not isinstance(entry, dict) or set(entry) != {"width", "height", "anchor_mm", "rle"}:
        raise MaskError(f"malformed mask entry {entry!r:.80}")
    width, height, anchor, rle = entry["width"], entry["height"], entry["anchor_mm"], entry["rle"]
    for v in (width, height):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise MaskError(f"mask dimensions must be positive integers, got {width}x{height}")
    if (not isinstance(anchor, list) or len(anchor) != 2
            or not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in anchor)):
        raise MaskError(f"anchor_mm must be a pair of numbers, got {anchor!r}")
    if not isinstance(rle, list):
        raise MaskError("rle must be a list")
    return RoiMask(rle_decode(rle, width, height), (anchor[0], anchor[1]))


def save_masks(masks: Iterable[RoiMask], path) -> None:
    Path(path).write_text(json.dumps([mask_to_dict(m) for m in masks]))


def load_mask_collection(path, grid_shape=None, grid_spacing=None) -> MaskCollection:
    """Read a .smask file; entry order becomes the canonical order.

    The file carries no lattice metadata, so ``grid_shape`` and
    ``grid_spacing`` may be supplied by the caller.
    """
    try:
        entries = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MaskError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(entries, list):
        raise MaskError(f"{path}: expected a JSON array of masks")
    masks = []
    for i, entry in enumerate(entries):
        try:
            masks.append(mask_from_dict(entry))
        except MaskError as exc:
            raise MaskError(f"{path}: entry {i}: {exc}") from None
    return MaskCollection(tuple(masks), grid_shape, grid_spacing)


def save_mask_collection(collection: MaskCollection, path) -> None:
    save_masks(collection.masks, path)
