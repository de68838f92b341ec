"""ROI-level ROC and lesion-level FROC analysis of suspiciousness maps.

Ties are broken everywhere by (score descending, row, col).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import EvaluationError, PlacementError
from .masks import RoiMask, place_mask
from .suspicion import SuspiciousnessMap

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"
DEFAULT_MATCH_RADIUS_MM = 5.0
DEFAULT_MIN_DISTANCE_MM = 5.0
# absorbs float error when comparing physical distances to a radius
_DIST_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class CaseRecord:
    """One evaluated case. ``truth_rois`` are frame-sized masks on ``susp``."""

    case_id: str
    susp: SuspiciousnessMap
    truth_rois: Tuple[RoiMask, ...] = ()
    label: str = NEGATIVE

    def __post_init__(self):
        rois = tuple(self.truth_rois)
        object.__setattr__(self, "truth_rois", rois)
        if self.label not in (POSITIVE, NEGATIVE):
            raise EvaluationError(f"case {self.case_id}: label must be positive or negative")
        if (self.label == POSITIVE) != bool(rois):
            raise EvaluationError(f"case {self.case_id}: positive cases need truth ROIs and negatives none")
        for roi in rois:
            if roi.bits.shape != self.susp.shape:
                raise EvaluationError(f"case {self.case_id}: truth ROI shape {roi.bits.shape} "
                                      f"does not match map {self.susp.shape}")


class RocPoint(NamedTuple):
    fpr: float
    tpr: float
    threshold: float


class FrocPoint(NamedTuple):
    fp_per_patient: float
    sensitivity: float
    threshold: float


@dataclass(frozen=True)
class RocCurve:
    points: Tuple[RocPoint, ...]
    auc: float


@dataclass(frozen=True)
class FrocCurve:
    points: Tuple[FrocPoint, ...]
    n_patients: int
    n_lesions: int


class LocalizationPoint(NamedTuple):
    position: Tuple[int, int]
    score: float
    case_id: str = ""


# ------------------------------------------------------------------------- ROC


def score_roi(susp: SuspiciousnessMap, roi: RoiMask) -> float:
    """Mean suspiciousness over the valid pixels of a frame-sized ROI."""
    if roi.bits.shape != susp.shape:
        raise EvaluationError(f"ROI shape {roi.bits.shape} does not match map {susp.shape}")
    sel = roi.bits & susp.valid
    if not sel.any():
        raise EvaluationError("ROI covers no valid pixel")
    return math.fsum(susp.values[sel].tolist()) / int(sel.sum())


def roc_analysis(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> RocCurve:
    """Threshold sweep (score >= t is called positive) with trapezoidal AUC.

    Equal scores share one threshold. The area is accumulated in integer
    counts and divided once, so it equals the Mann-Whitney statistic with
    ties counted one half.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("ROC analysis needs at least one positive and one negative score")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise EvaluationError("ROC scores must be finite")
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    pos_sorted, neg_sorted = np.sort(pos), np.sort(neg)
    # number of scores >= t for each threshold
    tp = pos.size - np.searchsorted(pos_sorted, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg_sorted, thresholds, side="left")
    tp = np.concatenate([[0], tp]).astype(np.int64)
    fp = np.concatenate([[0], fp]).astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * pos.size * neg.size)
    points = [RocPoint(0.0, 0.0, math.inf)]
    points += [RocPoint(f / neg.size, t / pos.size, float(th))
               for f, t, th in zip(fp[1:].tolist(), tp[1:].tolist(), thresholds)]
    return RocCurve(tuple(points), auc)


def roi_scores(cases: Sequence[CaseRecord]) -> Tuple[List[float], List[float]]:
    """Lesion ROI scores and non-lesion scores for ROC analysis.

    Non-lesion regions are the positive cases' truth ROIs re-placed on each
    negative case through their anchors. Placements that leave the grid or
    cover no valid pixel are skipped and logged.
    """
    pos, neg = [], []
    rois = [roi for case in cases for roi in case.truth_rois]
    for case in cases:
        if case.label == POSITIVE:
            pos.extend(score_roi(case.susp, roi) for roi in case.truth_rois)
            continue
        for roi in rois:
            try:
                neg.append(score_roi(case.susp, place_mask(roi, case.susp)))
            except (PlacementError, EvaluationError) as exc:
                log.warning("case %s: skipped non-lesion ROI: %s", case.case_id, exc)
    return pos, neg


# ------------------------------------------------------------- local maxima


def _footprint(radius_mm: float, spacing) -> np.ndarray:
    dx, dy = spacing
    rr = int(math.floor(radius_mm / dy + _DIST_EPS))
    rc = int(math.floor(radius_mm / dx + _DIST_EPS))
    r, c = np.mgrid[-rr:rr + 1, -rc:rc + 1]
    return (r * dy) ** 2 + (c * dx) ** 2 <= radius_mm ** 2 + _DIST_EPS


def find_local_maxima(susp: SuspiciousnessMap, min_distance_mm: float = DEFAULT_MIN_DISTANCE_MM,
                      case_id: str = "") -> List[LocalizationPoint]:
    """Valid pixels that are >= every valid pixel within ``min_distance_mm``.

    Connected (8-neighbor) equal-valued runs of such pixels form a plateau
    and collapse to one point at the rounded plateau centroid; when that
    pixel is not on the plateau, the nearest plateau pixel is used instead.
    """
    if min_distance_mm < 0:
        raise ValueError("min_distance_mm must be >= 0")
    values = np.where(susp.valid, susp.values, -np.inf)
    neighborhood_max = ndimage.maximum_filter(values, footprint=_footprint(min_distance_mm, susp.spacing),
                                              mode="constant", cval=-np.inf)
    candidate = susp.valid & (values >= neighborhood_max)

    eight = np.ones((3, 3), dtype=int)
    points = []
    labels, _ = ndimage.label(candidate, structure=eight)
    for lab, box in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[box] == lab
        vals = values[box]
        r_off, c_off = box[0].start, box[1].start
        uniq = np.unique(vals[comp])
        if uniq.size == comp.sum():
            for r, c in zip(*np.nonzero(comp)):
                points.append(LocalizationPoint((int(r + r_off), int(c + c_off)), float(vals[r, c]), case_id))
            continue
        for value in uniq:
            # a plateau can itself split into several 8-connected pieces
            pieces, k = ndimage.label(comp & (vals == value), structure=eight)
            for j in range(1, k + 1):
                pr, pc = np.nonzero(pieces == j)
                cr = int(math.floor(pr.mean() + 0.5))
                cc = int(math.floor(pc.mean() + 0.5))
                if pieces[cr, cc] != j:
                    d2 = (pr - cr) ** 2 + (pc - cc) ** 2
                    best = np.lexsort((pc, pr, d2))[0]
                    cr, cc = int(pr[best]), int(pc[best])
                points.append(LocalizationPoint((cr + r_off, cc + c_off), float(value), case_id))
    points.sort(key=lambda p: (-p.score, p.position))
    return points


# ------------------------------------------------------------------------ FROC


def roi_distance_mm(position, roi: RoiMask, spacing) -> float:
    """Physical distance from a pixel to the nearest pixel of ``roi``."""
    rows, cols = np.nonzero(roi.bits)
    dx, dy = spacing
    d2 = ((rows - position[0]) * dy) ** 2 + ((cols - position[1]) * dx) ** 2
    return float(np.sqrt(d2.min()))


@dataclass
class _Detection:
    point: LocalizationPoint
    case_index: int
    matched_roi: Optional[int] = None


def match_points(cases: Sequence[CaseRecord], points_per_case: Sequence[Sequence[LocalizationPoint]],
                 match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM) -> List[_Detection]:
    """Greedy point-to-lesion matching in global (score desc, row, col) order.

    A point matches the nearest still-unmatched truth ROI of its case that
    lies within ``match_radius_mm`` (inclusive); every ROI is matched at most
    once. Because the order is by descending score, the matching at any
    threshold is a prefix of this one.
    """
    detections = [_Detection(p, ci) for ci, pts in enumerate(points_per_case) for p in pts]
    detections.sort(key=lambda d: (-d.point.score, d.case_index, d.point.position))
    taken = [set() for _ in cases]
    for det in detections:
        case = cases[det.case_index]
        best = None
        for ri, roi in enumerate(case.truth_rois):
            if ri in taken[det.case_index]:
                continue
            d = roi_distance_mm(det.point.position, roi, case.susp.spacing)
            if d <= match_radius_mm + _DIST_EPS and (best is None or d < best[0]):
                best = (d, ri)
        if best is not None:
            det.matched_roi = best[1]
            taken[det.case_index].add(best[1])
    return detections


def froc_analysis(cases: Sequence[CaseRecord], match_radius_mm: float = DEFAULT_MATCH_RADIUS_MM,
                  min_distance_mm: float = DEFAULT_MIN_DISTANCE_MM) -> FrocCurve:
    """Lesion sensitivity against false positives per patient.

    Localization points are the local maxima of each map with a positive
    score. The curve has one point per distinct point score (descending)
    after a (0, 0, inf) start.
    """
    if not cases:
        raise EvaluationError("FROC analysis needs at least one case")
    n_lesions = sum(len(c.truth_rois) for c in cases)
    if n_lesions == 0:
        raise EvaluationError("FROC analysis needs at least one lesion")
    per_case = [[p for p in find_local_maxima(c.susp, min_distance_mm, c.case_id) if p.score > 0]
                for c in cases]
    detections = match_points(cases, per_case, match_radius_mm)

    n = len(cases)
    points = [FrocPoint(0.0, 0.0, math.inf)]
    tp = fp = 0
    for i, det in enumerate(detections):
        if det.matched_roi is None:
            fp += 1
        else:
            tp += 1
        last_of_group = i + 1 == len(detections) or detections[i + 1].point.score != det.point.score
        if last_of_group:
            points.append(FrocPoint(fp / n, tp / n_lesions, det.point.score))
    return FrocCurve(tuple(points), n, n_lesions)


def sensitivity_at(curve: FrocCurve, fp_per_patient: float) -> float:
    """Sensitivity at a false-positive rate, interpolating linearly.

    Where the curve rises at a constant FP rate the highest sensitivity is
    used. Queries outside the curve are clamped to its ends.
    """
    if not curve.points:
        raise EvaluationError("empty FROC curve")
    best = {}
    for p in curve.points:
        best[p.fp_per_patient] = max(best.get(p.fp_per_patient, 0.0), p.sensitivity)
    xs = sorted(best)
    ys = [best[x] for x in xs]
    return float(np.interp(fp_per_patient, xs, ys))
