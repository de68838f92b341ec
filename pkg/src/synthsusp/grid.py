"""Raster data model, normalization, resampling, cropping and .sgrid I/O.

Physical convention: ``x`` runs along columns and ``y`` along rows.
``origin`` is the physical position (mm) of the center of pixel (0, 0), so
pixel (row, col) sits at ``(origin[0] + col * dx, origin[1] + row * dy)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import GridFormatError, NonFiniteError, PayloadLengthError

T2W = "T2W"
ADC = "ADC"
PIPELINE_CHANNELS = (T2W, ADC)

MAGIC = "SGRID1"
_HEADER_KEYS = {"magic", "width", "height", "channels", "spacing", "origin", "center"}

Pair = Tuple[float, float]


def _first_nonfinite(data):
    bad = np.argwhere(~np.isfinite(data))
    return tuple(int(i) for i in bad[0]) if len(bad) else None


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """Multi-channel 2D float32 raster with physical geometry.

    ``data`` has shape ``(channels, height, width)`` and is stored read-only.
    """

    data: np.ndarray
    channels: Tuple[str, ...]
    spacing: Pair
    origin: Pair = (0.0, 0.0)
    center: Optional[Pair] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float32, copy=True)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3:
            raise GridFormatError(f"grid data must be 2D or 3D, got shape {data.shape}")
        channels = tuple(str(c) for c in self.channels)
        if len(channels) != data.shape[0]:
            raise GridFormatError(f"{len(channels)} channel ids for {data.shape[0]} data channels")
        if len(set(channels)) != len(channels):
            raise GridFormatError(f"duplicate channel ids {channels}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise GridFormatError(f"empty grid of shape {data.shape[1:]}")
        spacing = (float(self.spacing[0]), float(self.spacing[1]))
        if not all(math.isfinite(s) and s > 0 for s in spacing):
            raise GridFormatError(f"spacing must be strictly positive, got {spacing}")
        origin = (float(self.origin[0]), float(self.origin[1]))
        center = None if self.center is None else (float(self.center[0]), float(self.center[1]))
        bad = _first_nonfinite(data)
        if bad is not None:
            raise NonFiniteError(*bad)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "center", center)

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width) in pixels."""
        return self.data.shape[1], self.data.shape[2]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.data[self.channels.index(name)]
        except ValueError:
            raise KeyError(f"channel {name!r} not in {self.channels}") from None

    def replace(self, **changes) -> "ImageGrid":
        kw = dict(data=self.data, channels=self.channels, spacing=self.spacing,
                  origin=self.origin, center=self.center)
        kw.update(changes)
        return ImageGrid(**kw)

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return (
            self.channels == other.channels
            and self.spacing == other.spacing
            and self.origin == other.origin
            and self.center == other.center
            and self.data.shape == other.data.shape
            and np.array_equal(self.data.view(np.uint32), other.data.view(np.uint32))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NormalizedGrid(ImageGrid):
    """An ImageGrid whose channels were mapped affinely into [0, 1].

    ``lo`` and ``hi`` hold the per-channel source range so that
    ``value * (hi - lo) + lo`` recovers the source intensities.
    """

    lo: Tuple[float, ...] = field(default=())
    hi: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        super().__post_init__()
        n = len(self.channels)
        lo = tuple(float(v) for v in self.lo) or (0.0,) * n
        hi = tuple(float(v) for v in self.hi) or (1.0,) * n
        if len(lo) != n or len(hi) != n:
            raise GridFormatError("normalization parameters must match the channel count")
        if self.data.min() < 0.0 or self.data.max() > 1.0:
            raise GridFormatError("normalized data must lie in [0, 1]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def replace(self, **changes) -> "NormalizedGrid":
        kw = dict(data=self.data, channels=self.channels, spacing=self.spacing,
                  origin=self.origin, center=self.center, lo=self.lo, hi=self.hi)
        kw.update(changes)
        return NormalizedGrid(**kw)

    def denormalize(self) -> ImageGrid:
        lo = np.array(self.lo)[:, None, None]
        hi = np.array(self.hi)[:, None, None]
        span = np.where(hi > lo, hi - lo, 0.0)
        values = self.data.astype(np.float64) * span + lo
        return ImageGrid(values, self.channels, self.spacing, self.origin, self.center)


# --------------------------------------------------------------------------- I/O


def _header_dict(grid: ImageGrid) -> dict:
    return {
        "magic": MAGIC,
        "width": grid.width,
        "height": grid.height,
        "channels": list(grid.channels),
        "spacing": list(grid.spacing),
        "origin": list(grid.origin),
        "center": None if grid.center is None else list(grid.center),
    }


def grid_to_bytes(grid: ImageGrid) -> bytes:
    header = json.dumps(_header_dict(grid), separators=(",", ":")).encode("utf-8") + b"\n"
    return header + np.ascontiguousarray(grid.data, dtype="<f4").tobytes()


def save_grid(grid: ImageGrid, path) -> None:
    """Write ``grid`` as .sgrid. Raises OSError if the path is unwritable."""
    Path(path).write_bytes(grid_to_bytes(grid))


def _pair(header, key, allow_none=False):
    value = header[key]
    if value is None and allow_none:
        return None
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
        raise GridFormatError(f"header field {key!r} must be a pair of numbers, got {value!r}")
    return float(value[0]), float(value[1])


def grid_from_bytes(raw: bytes) -> ImageGrid:
    newline = raw.find(b"\n")
    if newline < 0:
        raise GridFormatError("missing header line terminator")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise GridFormatError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise GridFormatError("header must be a JSON object")
    if set(header) != _HEADER_KEYS:
        raise GridFormatError(f"header keys {sorted(header)} differ from {sorted(_HEADER_KEYS)}")
    if header["magic"] != MAGIC:
        raise GridFormatError(f"bad magic {header['magic']!r}")
    width, height, channels = header["width"], header["height"], header["channels"]
    for key, v in (("width", width), ("height", height)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise GridFormatError(f"header field {key!r} must be a positive integer, got {v!r}")
    if (not isinstance(channels, list) or not channels
            or not all(isinstance(c, str) for c in channels)):
        raise GridFormatError(f"channels must be a non-empty list of strings, got {channels!r}")
    spacing = _pair(header, "spacing")
    origin = _pair(header, "origin")
    center = _pair(header, "center", allow_none=True)

    payload = raw[newline + 1:]
    expected = width * height * len(channels)
    if len(payload) != 4 * expected:
        raise PayloadLengthError(
            f"header declares {expected} floats ({len(channels)}x{height}x{width}) "
            f"but payload holds {len(payload) / 4:g}")
    data = np.frombuffer(payload, dtype="<f4").reshape(len(channels), height, width)
    return ImageGrid(data.astype(np.float32), tuple(channels), spacing, origin, center)


def load_grid(path) -> ImageGrid:
    """Read a .sgrid file.

    Raises GridFormatError for a malformed header, PayloadLengthError when the
    payload size disagrees with the header and NonFiniteError naming the first
    offending (channel, row, col).
    """
    return grid_from_bytes(Path(path).read_bytes())


# ------------------------------------------------------------------- operations


def normalize(grid: ImageGrid) -> NormalizedGrid:
    """Min-max map each channel into [0, 1]; constant channels become 0.5."""
    src = grid.data.astype(np.float64)
    out = np.empty_like(src)
    lo, hi = [], []
    for k, chan in enumerate(src):
        cmin, cmax = float(chan.min()), float(chan.max())
        lo.append(cmin)
        hi.append(cmax)
        if cmax > cmin:
            out[k] = (chan - cmin) / (cmax - cmin)
        else:
            out[k] = 0.5
    out = np.clip(out.astype(np.float32), 0.0, 1.0)
    return NormalizedGrid(out, grid.channels, grid.spacing, grid.origin, grid.center,
                          lo=tuple(lo), hi=tuple(hi))


def _bilinear(chan: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``chan`` at fractional (rows, cols) with edge clamping."""
    h, w = chan.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.minimum(np.floor(r).astype(np.intp), max(h - 2, 0))
    c0 = np.minimum(np.floor(c).astype(np.intp), max(w - 2, 0))
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    r0, r1, fr = r0[:, None], r1[:, None], fr[:, None]
    top = chan[r0, c0] * (1.0 - fc) + chan[r0, c1] * fc
    bottom = chan[r1, c0] * (1.0 - fc) + chan[r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr


def resample_to(src: ImageGrid, target_spacing: Sequence[float], target_shape: Sequence[int],
                target_origin: Optional[Sequence[float]] = None) -> ImageGrid:
    """Bilinearly resample ``src`` onto a new lattice.

    ``target_shape`` is (height, width). The output lattice starts at
    ``target_origin`` (default: the source origin). Samples beyond the source
    extent take the nearest edge value.
    """
    th, tw = (int(v) for v in target_shape)
    dx, dy = (float(v) for v in target_spacing)
    if th < 1 or tw < 1:
        raise GridFormatError(f"degenerate target shape {tuple(target_shape)}")
    if not (dx > 0 and dy > 0):
        raise GridFormatError(f"target spacing must be positive, got {tuple(target_spacing)}")
    origin = src.origin if target_origin is None else (float(target_origin[0]), float(target_origin[1]))
    if (dx, dy) == src.spacing and (th, tw) == src.shape and origin == src.origin:
        return src.replace()

    sx, sy = src.spacing
    cols = (origin[0] + np.arange(tw) * dx - src.origin[0]) / sx
    rows = (origin[1] + np.arange(th) * dy - src.origin[1]) / sy
    data = np.stack([_bilinear(chan.astype(np.float64), rows, cols) for chan in src.data])
    return ImageGrid(data, src.channels, (dx, dy), origin, src.center)


def _round_half_up(x: float) -> int:
    # tolerance absorbs representation error in mm -> pixel conversions
    return int(math.floor(x + 0.5 + 1e-9))


def crop_physical(grid: ImageGrid, window_mm: Sequence[float], center_mm: Sequence[float]) -> ImageGrid:
    """Cut a window of ``window_mm`` (w, h) centered at ``center_mm`` (x, y).

    The crop stays on the source pixel lattice; parts of the window outside
    the grid are filled with 0.
    """
    wmm, hmm = (float(v) for v in window_mm)
    if not (wmm > 0 and hmm > 0):
        raise GridFormatError(f"window must be positive, got {tuple(window_mm)}")
    dx, dy = grid.spacing
    nw = max(1, _round_half_up(wmm / dx))
    nh = max(1, _round_half_up(hmm / dy))
    ccol = (float(center_mm[0]) - grid.origin[0]) / dx
    crow = (float(center_mm[1]) - grid.origin[1]) / dy
    c0 = _round_half_up(ccol - (nw - 1) / 2)
    r0 = _round_half_up(crow - (nh - 1) / 2)

    h, w = grid.shape
    sr0, sr1 = max(r0, 0), min(r0 + nh, h)
    sc0, sc1 = max(c0, 0), min(c0 + nw, w)
    if sr0 >= sr1 or sc0 >= sc1:
        raise GridFormatError("crop window lies entirely outside the grid")
    out = np.zeros((len(grid.channels), nh, nw), dtype=np.float32)
    out[:, sr0 - r0:sr1 - r0, sc0 - c0:sc1 - c0] = grid.data[:, sr0:sr1, sc0:sc1]
    origin = (grid.origin[0] + c0 * dx, grid.origin[1] + r0 * dy)
    return grid.replace(data=out, origin=origin)


def geometric_center(shape: Sequence[int], spacing: Sequence[float],
                     origin: Sequence[float] = (0.0, 0.0)) -> Pair:
    """Physical position of the middle of a (height, width) lattice."""
    h, w = shape
    return (origin[0] + (w - 1) / 2 * spacing[0], origin[1] + (h - 1) / 2 * spacing[1])
