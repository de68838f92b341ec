"""Command-line entry point.

Every successful command prints one JSON document on stdout; logs go to
stderr. Exit codes: 0 success, 1 not-negative report, 2 usage or input
validation error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (GridFormatError, MaskError, NonFiniteError, ReportError, SynthSuspError,
                     UnclassifiableReport)
from .evaluation import froc_analysis, roc_analysis, roi_scores, sensitivity_at
from .grid import ImageGrid, load_grid, normalize, save_grid
from .masks import build_prevalence, load_mask_collection, place_collection
from .phantom import PhantomSpec, candidate_lattice, generate_cohort
from .pipeline import (DISTANCE_NAMES, PipelineConfig, infer_case, load_manifest_records, run_demo,
                       save_susp)
from .report import classify_text, default_rules, load_rules
from .suspicion import infer_many
from .synthesis import METHODS, obstruct

log = logging.getLogger("synthsusp")

EXIT_OK, EXIT_NOT_NEGATIVE, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit({"error": message, "kind": "usage"})
        sys.exit(EXIT_USAGE)


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, default=_jsonable) + "\n")
    sys.stdout.flush()


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def _existing(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {p}")
    return p


def _pair(text, kind=float):
    parts = str(text).replace("x", ",").split(",")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected one or two values, got {text!r}")
    return tuple(kind(p) for p in parts)


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped.

    Keys are flag names without the leading dashes; ``-`` and ``_`` are
    interchangeable.
    """
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


# ------------------------------------------------------------------ commands


def _config_from(args) -> PipelineConfig:
    try:
        return PipelineConfig(
            method=args.method, tol=args.tol, max_iters=args.max_iters, exchange_dir=args.exchange_dir,
            timeout=args.timeout, distance=getattr(args, "distance", "adc-incr"),
            match_radius_mm=getattr(args, "match_radius_mm", 5.0),
            min_distance_mm=getattr(args, "min_distance_mm", 5.0), workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_classify_report(args) -> int:
    rules = load_rules(_existing(args.rules)) if args.rules else default_rules()
    text = _existing(args.report).read_text()
    try:
        verdict = classify_text(text, rules)
    except UnclassifiableReport as exc:
        _emit({"error": str(exc), "kind": "unclassifiable", "report": str(args.report)})
        return EXIT_USAGE
    _emit({"report": str(args.report), **verdict.to_dict()})
    return EXIT_OK if verdict.is_negative else EXIT_NOT_NEGATIVE


def _image_and_masks(args):
    image = load_grid(_existing(args.image))
    masks = load_mask_collection(_existing(args.masks), grid_spacing=args.mask_spacing)
    return image, masks


def cmd_build_prevalence(args) -> int:
    image, masks = _image_and_masks(args)
    prev = build_prevalence(masks, image)
    if args.out:
        save_grid(ImageGrid(prev.counts.astype(np.float32), ("PREVALENCE",), image.spacing,
                            image.origin, image.center), args.out)
    _emit({"n_masks": len(masks), "max_count": int(prev.counts.max()),
           "support_fraction": float(prev.support.mean()), "out": args.out})
    return EXIT_OK


def cmd_synthesize(args) -> int:
    image, masks = _image_and_masks(args)
    config = _config_from(args)
    if not 0 <= args.index < len(masks):
        raise UsageError(f"--index {args.index} out of range for {len(masks)} masks")
    norm = normalize(image)
    placed = place_collection(masks, norm)[args.index]
    result = config.synthesizer()(obstruct(norm, placed))
    if args.out:
        save_grid(norm.replace(data=result.values.astype(np.float32)), args.out)
    s = result.stats
    _emit({"method": args.method, "index": args.index, "iterations": s.iterations,
           "residual": s.residual, "converged": s.converged, "masked_pixels": placed.area,
           "out": args.out})
    return EXIT_OK


def cmd_infer(args) -> int:
    config = _config_from(args)
    if args.manifest:
        return _infer_manifest(args, config)
    if not (args.image and args.masks and args.out):
        raise UsageError("infer needs --image, --masks and --out (or --manifest)")
    image, masks = _image_and_masks(args)
    susp = infer_many(normalize(image), masks, config.synthesizer(), [args.distance],
                      workers=config.workers)[args.distance]
    sidecar = save_susp(susp, args.out)
    _emit({"out": args.out, "distance": args.distance, "method": args.method,
           "valid_fraction": sidecar["valid_fraction"], "max": float(susp.values.max()),
           "n_masks": len(masks)})
    return EXIT_OK


def _infer_manifest(args, config) -> int:
    manifest = _existing(args.manifest)
    base = manifest.parent
    entries = json.loads(manifest.read_text())
    masks = load_mask_collection(_existing(args.masks or base / "rois.smask"), grid_spacing=args.mask_spacing)
    written = []
    for entry in entries:
        image = load_grid(_existing(base / entry["image_path"]))
        susp = infer_case(image, masks, config, [args.distance])[args.distance]
        save_susp(susp, base / entry["susp_path"])
        written.append(entry["susp_path"])
        log.info("inferred %s", entry["case_id"])
    _emit({"manifest": str(manifest), "distance": args.distance, "written": written})
    return EXIT_OK


def cmd_gen_phantom(args) -> int:
    from .pipeline import write_cohort

    spacing = tuple(args.spacing)
    collection = (load_mask_collection(_existing(args.masks), grid_spacing=spacing)
                  if args.masks else candidate_lattice(spacing))
    base = PhantomSpec(seed=args.seed, shape=tuple(args.shape), spacing=spacing, adc_drop=args.adc_drop,
                       n_lesions=args.lesions_per_case)
    cases = generate_cohort(base, args.n_pos, args.n_neg, collection)
    manifest = write_cohort(cases, collection, args.out_dir)
    _emit({"manifest": str(manifest), "n_cases": len(cases),
           "n_lesions": sum(len(c.truth_rois) for c in cases), "seed": args.seed})
    return EXIT_OK


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.9g}"


def cmd_evaluate(args) -> int:
    records = load_manifest_records(_existing(args.cases))
    if args.mode == "roc":
        pos, neg = roi_scores(records)
        curve = roc_analysis(pos, neg)
        rows = [(p.threshold, p.fpr, p.tpr) for p in curve.points]
        summary = {"mode": "roc", "auc": curve.auc, "n_pos": len(pos), "n_neg": len(neg)}
    else:
        curve = froc_analysis(records, args.match_radius_mm, args.min_distance_mm)
        rows = [(p.threshold, p.fp_per_patient, p.sensitivity) for p in curve.points]
        summary = {"mode": "froc", "n_patients": curve.n_patients, "n_lesions": curve.n_lesions,
                   "sensitivity_at_1fp": sensitivity_at(curve, 1.0),
                   "sensitivity_at_2fp": sensitivity_at(curve, 2.0)}
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "fpr_or_fppp", "tpr_or_sens"])
            writer.writerows([_fmt(v) for v in row] for row in rows)
    _emit({**summary, "n_points": len(rows), "out": args.out})
    return EXIT_OK


def cmd_demo(args) -> int:
    config = _config_from(args)
    result = run_demo(seed=args.seed, n_pos=args.n_pos, n_neg=args.n_neg, shape=tuple(args.shape),
                      spacing=tuple(args.spacing), adc_drop=args.adc_drop, config=config)
    _emit(result)
    return EXIT_OK


# -------------------------------------------------------------------- parser


def _add_synth_flags(p):
    p.add_argument("--method", choices=METHODS, default="harmonic")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--exchange-dir", default=None)
    p.add_argument("--timeout", type=float, default=60.0, help="external synthesizer timeout, seconds")


def _add_phantom_flags(p, n_default):
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-pos", type=int, default=n_default)
    p.add_argument("--n-neg", type=int, default=n_default)
    p.add_argument("--shape", type=lambda t: _pair(t, int), default=(128, 128), help="H,W in pixels")
    p.add_argument("--spacing", type=_pair, default=(0.625, 0.625), help="dx,dy in mm")
    p.add_argument("--adc-drop", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="synthsusp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"synthsusp {__version__}")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers (default 1)")
    parser.add_argument("--config", default=None, help="key = value defaults file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("classify-report", parents=[common], help="MRI-negativity verdict for a report")
    p.add_argument("--rules", default=None, help="JSON rules file (default: built-in)")
    p.add_argument("report")
    p.set_defaults(func=cmd_classify_report)

    for name, func, helptext in (("build-prevalence", cmd_build_prevalence, "prevalence map of a collection"),
                                 ("synthesize", cmd_synthesize, "synthesize one obstructed region"),
                                 ("infer", cmd_infer, "suspiciousness map of a case")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--image")
        p.add_argument("--masks")
        p.add_argument("--mask-spacing", type=_pair, default=None,
                       help="spacing the masks were drawn at; checked against the image")
        p.add_argument("--out")
        if name != "build-prevalence":
            _add_synth_flags(p)
        if name == "synthesize":
            p.add_argument("--index", type=int, default=0, help="which mask of the collection")
        if name == "infer":
            p.add_argument("--distance", choices=DISTANCE_NAMES, default="adc-incr")
            p.add_argument("--manifest", default=None,
                           help="infer every case of a gen-phantom manifest instead of --image")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-phantom", parents=[common], help="write a seeded phantom cohort")
    _add_phantom_flags(p, 10)
    p.add_argument("--lesions-per-case", type=int, default=1)
    p.add_argument("--masks", default=None, help="ROI candidates (default: built-in lattice)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_phantom)

    p = sub.add_parser("evaluate", parents=[common], help="ROC or FROC curve from a manifest")
    p.add_argument("--cases", required=True, help="manifest.json")
    p.add_argument("--mode", choices=("roc", "froc"), default="roc")
    p.add_argument("--match-radius-mm", type=float, default=5.0)
    p.add_argument("--min-distance-mm", type=float, default=5.0)
    p.add_argument("--out", default=None, help="curve CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("demo", parents=[common], help="phantom cohort -> inference -> ROC/FROC")
    _add_phantom_flags(p, 20)
    _add_synth_flags(p)
    p.add_argument("--distance", choices=DISTANCE_NAMES, default="adc-incr")
    p.add_argument("--match-radius-mm", type=float, default=5.0)
    p.add_argument("--min-distance-mm", type=float, default=5.0)
    p.set_defaults(func=cmd_demo)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values as defaults (flags still win)."""
    known = argparse.ArgumentParser(add_help=False)
    known.add_argument("--config", default=None)
    ns, _ = known.parse_known_args(argv)
    if not ns.config:
        return parser.parse_args(argv)
    values = read_config(_existing(ns.config))
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for p in [parser, *subparsers.choices.values()]:
        dests = {a.dest for a in p._actions}
        p.set_defaults(**{k: v for k, v in values.items() if k in dests and k != "config"})
    unknown = set(values) - {a.dest for p in subparsers.choices.values() for a in p._actions}
    if unknown:
        raise UsageError(f"{ns.config}: unknown keys {sorted(unknown)}")
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        _emit({"error": str(exc), "kind": "usage"})
        return EXIT_USAGE
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        _emit({"error": "--workers must be >= 1", "kind": "usage"})
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _emit({"error": str(exc), "kind": "usage"})
        return EXIT_USAGE
    except (GridFormatError, NonFiniteError, MaskError, ReportError) as exc:
        _emit({"error": str(exc), "kind": type(exc).__name__})
        return EXIT_USAGE
    except (SynthSuspError, OSError, ValueError) as exc:
        log.error("%s", exc)
        _emit({"error": str(exc), "kind": type(exc).__name__})
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
