"""Region synthesizers: complete an obstructed region from its surroundings.

Every synthesizer is a callable ``SynthesisRequest -> SynthesisResult``.
Masked input pixels are zero; unmasked output pixels are copied from the
input bit-for-bit and masked output pixels are clamped to [0, 1].
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ExchangeTimeout, ShapeMismatchError, SynthesisError, UnsolvableError
from .grid import NormalizedGrid, grid_to_bytes, load_grid
from .masks import RoiMask, mask_to_dict

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 10_000
SOR_OMEGA = 1.9
POLL_INTERVAL_S = 0.1
DEFAULT_TIMEOUT_S = 60.0


@dataclass(frozen=True, eq=False)
class SynthesisRequest:
    """An obstructed image (masked pixels zeroed) plus the frame-sized mask."""

    image: NormalizedGrid
    mask: RoiMask

    def __post_init__(self):
        if self.mask.bits.shape != self.image.shape:
            raise SynthesisError(
                f"mask shape {self.mask.bits.shape} does not match image {self.image.shape}")
        if np.any(self.image.data[:, self.mask.bits] != 0):
            raise SynthesisError("masked pixels of the request image must be zero")


def obstruct(image: NormalizedGrid, mask: RoiMask) -> SynthesisRequest:
    """Zero the masked pixels of every channel: the ``(1 - M) I`` input."""
    if mask.bits.shape != image.shape:
        raise SynthesisError(f"mask shape {mask.bits.shape} does not match image {image.shape}")
    data = np.array(image.data)
    data[:, mask.bits] = 0.0
    return SynthesisRequest(image.replace(data=data), mask)


@dataclass(frozen=True)
class SolverStats:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    channel_residuals: tuple = ()


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Dense float64 (channels, height, width) values."""

    values: np.ndarray
    stats: SolverStats = field(default_factory=SolverStats)


def _finish(req: SynthesisRequest, values: np.ndarray, stats: SolverStats) -> SynthesisResult:
    out = req.image.data.astype(np.float64)
    m = req.mask.bits
    filled = values[:, m]
    if not np.all(np.isfinite(filled)):
        raise SynthesisError("synthesized values are not finite")
    out[:, m] = np.clip(filled, 0.0, 1.0)
    out.setflags(write=False)
    return SynthesisResult(out, stats)


# ------------------------------------------------------------------- harmonic


def _neighbor_sum(u: np.ndarray) -> np.ndarray:
    s = np.zeros_like(u)
    s[1:, :] += u[:-1, :]
    s[:-1, :] += u[1:, :]
    s[:, 1:] += u[:, :-1]
    s[:, :-1] += u[:, 1:]
    return s


def _neighbor_count(shape) -> np.ndarray:
    return _neighbor_sum(np.ones(shape))


def laplace_residual(u: np.ndarray, mask: np.ndarray) -> float:
    """Relative residual of the masked 4-neighbor Laplace system.

    Off-grid neighbors are dropped (reflective edges). The norm is taken
    over masked pixels and scaled by the norm of the Dirichlet data that the
    unmasked neighbors contribute.
    """
    u = np.asarray(u, dtype=np.float64)
    r = (_neighbor_sum(u) - _neighbor_count(u.shape) * u)[mask]
    b = _neighbor_sum(np.where(mask, 0.0, u))[mask]
    scale = float(np.linalg.norm(b))
    return float(np.linalg.norm(r)) / (scale if scale > 0 else 1.0)


def _solve(values: np.ndarray, mask: np.ndarray, tol: float, max_iters: int):
    """Red-black SOR over the masked pixels of every channel, in place.

    Channels do not interact; they share one flat buffer and one sweep loop,
    which runs until the worst channel meets ``tol``.
    """
    n_chan, h, w = values.shape
    # zero-padded copy; off-grid neighbors read the always-zero border
    pad = np.zeros((n_chan, h + 2, w + 2))
    pad[:, 1:-1, 1:-1] = values
    flat = pad.ravel()
    stride = w + 2
    plane = (h + 2) * stride
    rows, cols = np.nonzero(mask)
    n = len(rows)
    idx = ((rows + 1) * stride + cols + 1)[None, :] + plane * np.arange(n_chan)[:, None]
    idx = idx.ravel()
    steps = (-stride, stride, -1, 1)
    count = np.tile(_neighbor_count((h, w))[rows, cols], n_chan)

    def gather(at):
        return flat[at + steps[0]] + flat[at + steps[1]] + flat[at + steps[2]] + flat[at + steps[3]]

    flat[idx] = 0.0
    scale = np.linalg.norm(gather(idx).reshape(n_chan, n), axis=1)
    scale[scale == 0] = 1.0
    # start from the mean of the data pixels bordering the region
    data = np.pad(~mask, 1).ravel()
    local = idx[:n]
    border = np.unique(np.concatenate([local + st for st in steps]))
    border = border[data[border]]
    for k in range(n_chan):
        flat[idx[k * n:(k + 1) * n]] = flat[border + k * plane].mean()

    colours = []
    for parity in (0, 1):
        sel = np.tile((rows + cols) % 2 == parity, n_chan)
        colours.append((idx[sel], count[sel]))

    def residual():
        r = (gather(idx) - count * flat[idx]).reshape(n_chan, n)
        return np.sqrt(np.einsum("ij,ij->i", r, r)) / scale

    res = residual()
    it = 0
    while res.max() > tol and it < max_iters:
        for cidx, ccount in colours:
            flat[cidx] += SOR_OMEGA * (gather(cidx) / ccount - flat[cidx])
        it += 1
        res = residual()
    values[:, mask] = flat[idx].reshape(n_chan, n)
    return it, bool(res.max() <= tol)


def synthesize_harmonic(req: SynthesisRequest, tol: float = DEFAULT_TOL,
                        max_iters: int = DEFAULT_MAX_ITERS) -> SynthesisResult:
    """Fill the masked region with the discrete harmonic interpolant.

    Each channel is solved on its own by red-black Gauss-Seidel with SOR
    (omega 1.9): masked pixels satisfy the 4-neighbor Laplace equation with
    the unmasked neighbors as Dirichlet data and off-grid neighbors dropped
    (reflective edges). Sweeps stop once the relative residual is at most
    ``tol`` or after ``max_iters``. The reported residual is recomputed on
    the returned, clamped values.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    mask = req.mask.bits
    if mask.all():
        raise UnsolvableError("mask covers the whole grid; no boundary data to interpolate")
    values = req.image.data.astype(np.float64)
    iters, converged = _solve(values, mask, tol, max_iters)
    out = _finish(req, values, SolverStats())
    per_channel = tuple(laplace_residual(chan, mask) for chan in out.values)
    return SynthesisResult(out.values, SolverStats(iters, max(per_channel), converged, per_channel))


# ------------------------------------------------------------------ mean fill


def synthesize_meanfill(req: SynthesisRequest) -> SynthesisResult:
    """Set masked pixels to the per-channel mean of the unmasked pixels."""
    mask = req.mask.bits
    if mask.all():
        raise SynthesisError("mean fill needs at least one unmasked pixel")
    values = req.image.data.astype(np.float64)
    for chan in values:
        chan[mask] = math.fsum(chan[~mask].tolist()) / int((~mask).sum())
    return _finish(req, values, SolverStats())


# ------------------------------------------------------------------- external


def request_key(req: SynthesisRequest) -> str:
    h = hashlib.sha256()
    h.update(grid_to_bytes(req.image))
    h.update(json.dumps(mask_to_dict(req.mask)).encode())
    return h.hexdigest()[:16]


def synthesize_external(req: SynthesisRequest, exchange_dir, timeout: float = DEFAULT_TIMEOUT_S,
                        poll_interval: float = POLL_INTERVAL_S) -> SynthesisResult:
    """Hand the request to an out-of-process model through a shared directory.

    Writes ``<key>.req.sgrid`` and ``<key>.req.smask`` and waits for
    ``<key>.resp.sgrid`` with the same channels and shape. Only the masked
    pixels of the response are used. Responses are left in place, so a
    repeated identical request is answered from the existing file.
    """
    exchange = Path(exchange_dir)
    key = request_key(req)
    req_grid = exchange / f"{key}.req.sgrid"
    req_mask = exchange / f"{key}.req.smask"
    resp = exchange / f"{key}.resp.sgrid"
    for path, payload in ((req_mask, json.dumps([mask_to_dict(req.mask)]).encode()),
                          (req_grid, grid_to_bytes(req.image))):
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(payload)
        tmp.replace(path)

    deadline = time.monotonic() + timeout
    while not resp.exists():
        if time.monotonic() >= deadline:
            raise ExchangeTimeout(f"no response {resp.name} within {timeout:g} s")
        time.sleep(poll_interval)
    answer = load_grid(resp)  # NonFiniteError on NaN/Inf responses
    if answer.data.shape != req.image.data.shape:
        raise ShapeMismatchError(
            f"response shape {answer.data.shape} does not match request {req.image.data.shape}")
    return _finish(req, answer.data.astype(np.float64), SolverStats())


Synthesizer = Callable[[SynthesisRequest], SynthesisResult]

METHODS = ("harmonic", "meanfill", "external")


def get_synthesizer(method: str, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                    exchange_dir: Optional[str] = None, timeout: float = DEFAULT_TIMEOUT_S) -> Synthesizer:
    if method == "harmonic":
        return partial(synthesize_harmonic, tol=tol, max_iters=max_iters)
    if method == "meanfill":
        return synthesize_meanfill
    if method == "external":
        if exchange_dir is None:
            raise ValueError("the external synthesizer needs an exchange directory")
        return partial(synthesize_external, exchange_dir=exchange_dir, timeout=timeout)
    raise ValueError(f"unknown synthesis method {method!r}; choose from {METHODS}")
