"""End-to-end glue: phantom cohort -> inference -> ROC/FROC."""
from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .evaluation import (CaseRecord, NEGATIVE, POSITIVE, froc_analysis, roc_analysis, roi_scores,
                         sensitivity_at)
from .grid import ImageGrid, load_grid, normalize, save_grid
from .masks import MaskCollection, load_mask_collection, place_mask, rle_decode, rle_encode, save_masks
from .phantom import GENERATOR_ID, PhantomCase, PhantomSpec, candidate_lattice, generate_cohort
from .suspicion import SuspiciousnessMap, infer_many
from .synthesis import DEFAULT_MAX_ITERS, DEFAULT_TIMEOUT_S, DEFAULT_TOL, METHODS, get_synthesizer

log = logging.getLogger(__name__)

DISTANCE_NAMES = ("adc-incr", "ssim")


@dataclass(frozen=True)
class PipelineConfig:
    method: str = "harmonic"
    tol: float = DEFAULT_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    exchange_dir: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT_S
    distance: str = "adc-incr"
    match_radius_mm: float = 5.0
    min_distance_mm: float = 5.0
    workers: int = 1

    def __post_init__(self):
        if self.tol <= 0 or self.max_iters < 1 or self.timeout <= 0 or self.workers < 1:
            raise ValueError("tol, max_iters, timeout and workers must be positive")
        if self.match_radius_mm < 0 or self.min_distance_mm < 0:
            raise ValueError("match radius and min distance must be >= 0")
        if self.distance not in DISTANCE_NAMES:
            raise ValueError(f"distance must be one of {DISTANCE_NAMES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.method == "external" and self.exchange_dir is None:
            raise ValueError("the external method needs an exchange directory")
        if self.exchange_dir is not None and not Path(self.exchange_dir).is_dir():
            raise ValueError(f"exchange directory {self.exchange_dir} does not exist")

    def synthesizer(self):
        return get_synthesizer(self.method, tol=self.tol, max_iters=self.max_iters,
                               exchange_dir=self.exchange_dir, timeout=self.timeout)


# ------------------------------------------------------------ susp map files


def sidecar_path(susp_path) -> Path:
    return Path(susp_path).with_suffix(".json")


def save_susp(susp: SuspiciousnessMap, path) -> dict:
    """Write the map as single-channel .sgrid plus a JSON sidecar."""
    save_grid(susp.to_grid(), path)
    sidecar = {
        "valid_fraction": float(susp.valid.mean()),
        "per_mask_residuals": [s.residual for s in susp.mask_stats],
        "valid_rle": rle_encode(susp.valid),
    }
    sidecar_path(path).write_text(json.dumps(sidecar))
    return sidecar


def load_susp(path) -> SuspiciousnessMap:
    grid = load_grid(path)
    values = grid.data[0].astype(np.float64)
    side = sidecar_path(path)
    if side.exists():
        valid = rle_decode(json.loads(side.read_text())["valid_rle"], grid.width, grid.height)
    else:
        valid = np.ones(grid.shape, dtype=bool)
    return SuspiciousnessMap(np.where(valid, values, 0.0), valid, grid.spacing, grid.origin, grid.center)


# --------------------------------------------------------------------- cases


def infer_case(image: ImageGrid, collection: MaskCollection, config: PipelineConfig,
               distances: Sequence[str] = DISTANCE_NAMES) -> Dict[str, SuspiciousnessMap]:
    return infer_many(normalize(image), collection, config.synthesizer(), list(distances))


def _infer_phantom(args):
    case, collection, config, distances = args
    return infer_case(case.image, collection, config, distances)


def infer_cohort(cases: Sequence[PhantomCase], collection: MaskCollection, config: PipelineConfig,
                 distances: Sequence[str] = DISTANCE_NAMES) -> List[Dict[str, SuspiciousnessMap]]:
    """Per-case inference, in a process pool when ``config.workers > 1``.

    Each case is computed independently, so results match a single-worker
    run exactly.
    """
    jobs = [(case, collection, config, tuple(distances)) for case in cases]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_infer_phantom, jobs))
    return [_infer_phantom(job) for job in jobs]


def evaluate_cases(records: Sequence[CaseRecord], match_radius_mm: float = 5.0,
                   min_distance_mm: float = 5.0) -> dict:
    pos, neg = roi_scores(records)
    out = {}
    if pos and neg:
        roc = roc_analysis(pos, neg)
        out["auc"] = roc.auc
        out["roc"] = roc
    if any(r.truth_rois for r in records):
        froc = froc_analysis(records, match_radius_mm, min_distance_mm)
        out["sensitivity_at_1fp"] = sensitivity_at(froc, 1.0)
        out["sensitivity_at_2fp"] = sensitivity_at(froc, 2.0)
        out["froc"] = froc
    return out


def run_demo(seed: int = 7, n_pos: int = 20, n_neg: int = 20, shape=(128, 128), spacing=(0.625, 0.625),
             adc_drop: float = 0.5, config: Optional[PipelineConfig] = None,
             collection: Optional[MaskCollection] = None) -> dict:
    """Generate a phantom cohort, infer both distances and evaluate them.

    The headline ``auc`` and ``sensitivity_at_1fp`` belong to
    ``config.distance``; ``by_distance`` holds both.
    """
    config = config or PipelineConfig()
    collection = collection or candidate_lattice(spacing)
    t0 = time.perf_counter()
    base = PhantomSpec(seed=seed, shape=tuple(shape), spacing=tuple(spacing), adc_drop=adc_drop)
    cases = generate_cohort(base, n_pos, n_neg, collection)
    maps = infer_cohort(cases, collection, config)

    by_distance = {}
    for name in DISTANCE_NAMES:
        records = [CaseRecord(c.case_id, m[name], c.truth_rois, c.label) for c, m in zip(cases, maps)]
        res = evaluate_cases(records, config.match_radius_mm, config.min_distance_mm)
        by_distance[name] = {k: res[k] for k in ("auc", "sensitivity_at_1fp", "sensitivity_at_2fp") if k in res}
    head = by_distance[config.distance]
    return {
        "seed": seed,
        "n_pos": n_pos,
        "n_neg": n_neg,
        "n_lesions": sum(len(c.truth_rois) for c in cases),
        "n_masks": len(collection),
        "method": config.method,
        "distance": config.distance,
        "generator": GENERATOR_ID,
        "workers": config.workers,
        "auc": head.get("auc"),
        "sensitivity_at_1fp": head.get("sensitivity_at_1fp"),
        "by_distance": by_distance,
        "elapsed_s": time.perf_counter() - t0,
    }


# --------------------------------------------------------------- phantom I/O


def write_cohort(cases: Sequence[PhantomCase], collection: MaskCollection, out_dir) -> Path:
    """Write cases, truth masks, the ROI collection and a manifest.

    Each manifest entry names the image, the truth masks and the path where
    ``infer`` is expected to put the suspiciousness map.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_masks(collection.masks, out / "rois.smask")
    manifest = []
    for case in cases:
        cid = case.case_id
        save_grid(case.image, out / f"{cid}.sgrid")
        truth = None
        if case.truth_rois:
            truth = f"{cid}.truth.smask"
            save_masks(case.truth_rois, out / truth)
        manifest.append({
            "case_id": cid,
            "image_path": f"{cid}.sgrid",
            "susp_path": f"{cid}.susp.sgrid",
            "truth_masks_path": truth,
            "label": case.label,
            "seed": case.spec.seed,
            "generator": GENERATOR_ID,
        })
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path


def load_manifest_records(manifest_path) -> List[CaseRecord]:
    """Read an evaluation manifest; relative paths resolve against its folder."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    entries = json.loads(manifest_path.read_text())
    if not isinstance(entries, list):
        raise ValueError(f"{manifest_path}: manifest must be a JSON list")
    records = []
    for entry in entries:
        susp = load_susp(base / entry["susp_path"])
        rois: Tuple = ()
        if entry.get("truth_masks_path"):
            coll = load_mask_collection(base / entry["truth_masks_path"])
            rois = tuple(place_mask(m, susp) for m in coll)
        label = entry.get("label", POSITIVE if rois else NEGATIVE)
        records.append(CaseRecord(str(entry["case_id"]), susp, rois, label))
    return records
