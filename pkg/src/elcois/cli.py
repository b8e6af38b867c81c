"""Command-line front end.

    elcois segment   --scans DIR --preds DIR --out DIR
    elcois cluster   --scans DIR [--preds DIR] --out DIR [--algo elc|euclidean]
    elcois refine    --scans DIR --preds DIR --out DIR
    elcois eval      --preds DIR --gt DIR [--out DIR] [--thresholds 0.9,0.7,0.5]
    elcois export-ply --scans DIR --preds DIR --out DIR

Scans, predictions and ground truth are paired by file stem. Options come
from an optional YAML file (``--config``); command-line flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import yaml

from .core import ClassConfig, EllipsoidParams
from .io_kitti import LabelRecords, export_ply, read_labels, read_scan, write_labels
from .metrics import DEFAULT_THRESHOLDS, MatchTable, build_match_table, evaluate, evaluate_per_scan
from .pipeline import ALGORITHMS, PipelineConfig, ScanBundle, refine_or_pass, run_pipeline, split_points

log = logging.getLogger("elcois")

CONFIG_KEYS = {
    "rho", "theta", "phi", "d_min", "background_ids", "known_thing_ids", "diffuse_r",
    "refine", "early_termination", "unknown_min_points", "algo", "radius", "thresholds",
    "aggregate",
}


@dataclass(frozen=True)
class RunManifest:
    command: str
    scans: Optional[Path]
    preds: Optional[Path]
    out: Optional[Path]
    gt: Optional[Path]
    config: PipelineConfig
    thresholds: tuple[float, ...]
    aggregate: str
    jobs: int


def load_config_file(path) -> dict:
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    return data


def _thresholds(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        values = tuple(float(t) for t in text)
    else:
        values = tuple(float(t) for t in str(text).split(",") if t.strip())
    if not values or any(not 0 < t <= 1 for t in values):
        raise ValueError(f"thresholds must lie in (0, 1], got {text!r}")
    return values


def build_manifest(args: argparse.Namespace) -> RunManifest:
    """Merge file settings and flags into a validated manifest; raises ValueError."""
    opts = load_config_file(args.config) if args.config else {}
    for key in ("rho", "theta", "phi", "radius", "diffuse_r", "algo", "aggregate"):
        if getattr(args, key, None) is not None:
            opts[key] = getattr(args, key)
    if getattr(args, "min_unknown_points", None) is not None:
        opts["unknown_min_points"] = args.min_unknown_points
    if getattr(args, "no_early_termination", False):
        opts["early_termination"] = False
    if getattr(args, "no_refine", False):
        opts["refine"] = False
    if getattr(args, "thresholds", None) is not None:
        opts["thresholds"] = args.thresholds

    defaults = ClassConfig()
    params = EllipsoidParams(
        float(opts.get("rho", 2.0)), float(opts.get("theta", 2.0)),
        float(opts.get("phi", 7.5)), float(opts.get("d_min", 0.001)),
    )
    classes = ClassConfig(
        frozenset(opts.get("background_ids", defaults.background_ids)),
        frozenset(opts.get("known_thing_ids", defaults.known_thing_ids)),
    )
    radius = opts.get("radius")
    cfg = PipelineConfig(
        params=params,
        classes=classes,
        diffuse_r=float(opts.get("diffuse_r", 1.0)),
        refine_known=bool(opts.get("refine", True)),
        unknown_min_points=int(opts.get("unknown_min_points", 10)),
        early_termination=bool(opts.get("early_termination", True)),
        algo=str(opts.get("algo", "elc")),
        euclidean_radius=None if radius is None else float(radius),
    )
    aggregate = str(opts.get("aggregate", "pooled"))
    if aggregate not in ("pooled", "per_scan"):
        raise ValueError(f"aggregate must be 'pooled' or 'per_scan', got {aggregate!r}")
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {jobs}")
    path = lambda name: None if getattr(args, name, None) is None else Path(getattr(args, name))  # noqa: E731
    return RunManifest(
        args.command, path("scans"), path("preds"), path("out"), path("gt"), cfg,
        _thresholds(opts.get("thresholds", DEFAULT_THRESHOLDS)), aggregate, jobs,
    )


def _stems(directory: Path, suffix: str) -> dict[str, Path]:
    return {p.stem: p for p in sorted(directory.glob(f"*{suffix}"))}


def _check_dirs(manifest: RunManifest, *names: str) -> None:
    for name in names:
        d = getattr(manifest, name)
        if d is None or not d.is_dir():
            raise FileNotFoundError(f"--{name} directory not found: {d}")


# Per-scan workers. Each returns an error string or None.

def _segment_one(stem: str, manifest: RunManifest) -> Optional[str]:
    pred_path = manifest.preds / f"{stem}.label"
    if not pred_path.exists():
        return f"{stem}: no prediction file {pred_path}"
    cloud = read_scan(manifest.scans / f"{stem}.bin")
    scan = ScanBundle.from_records(cloud, read_labels(pred_path, len(cloud)))
    write_labels(run_pipeline(scan, manifest.config).to_records(), manifest.out / f"{stem}.label")
    return None


def _cluster_one(stem: str, manifest: RunManifest) -> Optional[str]:
    cloud = read_scan(manifest.scans / f"{stem}.bin")
    cfg = replace(manifest.config, refine_known=False)
    if manifest.preds is not None:
        pred_path = manifest.preds / f"{stem}.label"
        if not pred_path.exists():
            return f"{stem}: no prediction file {pred_path}"
        records = read_labels(pred_path, len(cloud))
        scan = ScanBundle(cloud, records.semantic, records.instance)
        cfg = replace(cfg, classes=ClassConfig(cfg.classes.background_ids, frozenset()))
    else:
        zeros = np.zeros(len(cloud), dtype=np.int64)
        scan = ScanBundle(cloud, zeros, zeros)
        cfg = replace(cfg, classes=ClassConfig.empty())
    write_labels(run_pipeline(scan, cfg).to_records(), manifest.out / f"{stem}.label")
    return None


def _refine_one(stem: str, manifest: RunManifest) -> Optional[str]:
    pred_path = manifest.preds / f"{stem}.label"
    if not pred_path.exists():
        return f"{stem}: no prediction file {pred_path}"
    cloud = read_scan(manifest.scans / f"{stem}.bin")
    records = read_labels(pred_path, len(cloud))
    scan = ScanBundle.from_records(cloud, records)
    split = split_points(scan, manifest.config.classes)
    instance = np.zeros(len(cloud), dtype=np.int64)
    instance[split.known] = refine_or_pass(cloud.points[split.known], split.known_ids, manifest.config)
    write_labels(LabelRecords(records.semantic, instance), manifest.out / f"{stem}.label")
    return None


def _export_one(stem: str, manifest: RunManifest) -> Optional[str]:
    label_path = manifest.preds / f"{stem}.label"
    if not label_path.exists():
        return f"{stem}: no label file {label_path}"
    cloud = read_scan(manifest.scans / f"{stem}.bin")
    records = read_labels(label_path, len(cloud))
    export_ply(cloud, records.instance, manifest.out / f"{stem}.ply")
    return None


def _guarded(worker: Callable, stem: str, manifest: RunManifest) -> Optional[str]:
    try:
        return worker(stem, manifest)
    except Exception as exc:  # reported per scan; the run continues
        return f"{stem}: {exc}"


def _run_scans(manifest: RunManifest, worker: Callable, needs_preds: bool) -> int:
    _check_dirs(manifest, "scans", *(("preds",) if needs_preds else ()))
    if manifest.preds is not None:
        _check_dirs(manifest, "preds")
    stems = list(_stems(manifest.scans, ".bin"))
    if not stems:
        log.warning("no .bin scans found in %s", manifest.scans)
        return 0
    manifest.out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            errors = list(pool.map(_guarded, [worker] * len(stems), stems, [manifest] * len(stems)))
    else:
        errors = [_guarded(worker, s, manifest) for s in stems]
    failed = [e for e in errors if e]
    for e in failed:
        log.error(e)
    log.info(
        "%s: %d scan(s), %d failed, %.2f s",
        manifest.command, len(stems), len(failed), time.perf_counter() - start,
    )
    return 1 if failed else 0


def cmd_segment(manifest: RunManifest) -> int:
    return _run_scans(manifest, _segment_one, needs_preds=True)


def cmd_cluster(manifest: RunManifest) -> int:
    return _run_scans(manifest, _cluster_one, needs_preds=False)


def cmd_refine(manifest: RunManifest) -> int:
    return _run_scans(manifest, _refine_one, needs_preds=True)


def cmd_export_ply(manifest: RunManifest) -> int:
    return _run_scans(manifest, _export_one, needs_preds=True)


def cmd_eval(manifest: RunManifest) -> int:
    _check_dirs(manifest, "preds", "gt")
    preds = _stems(manifest.preds, ".label")
    gts = _stems(manifest.gt, ".label")
    unpaired = sorted(set(preds) ^ set(gts))
    if unpaired:
        log.error("unpaired label files: %s", ", ".join(unpaired))
        return 1
    known = manifest.config.classes.known_thing_ids
    tables = []
    for stem in sorted(gts):
        gt = read_labels(gts[stem])
        pred = read_labels(preds[stem], len(gt))
        tables.append(build_match_table(gt.semantic, gt.instance, pred.instance, known_ids=known))
    class_ids = sorted(known)
    if manifest.aggregate == "per_scan":
        report = evaluate_per_scan(tables, manifest.thresholds, class_ids)
    else:
        report = evaluate(MatchTable.concat(tables), manifest.thresholds, class_ids)
    text = report.to_text()
    sys.stdout.write(text)
    if manifest.out is not None:
        manifest.out.mkdir(parents=True, exist_ok=True)
        (manifest.out / "report.txt").write_text(text)
        (manifest.out / "report.json").write_text(report.to_json() + "\n")
    log.info("eval: %d scan(s)", len(tables))
    return 0


COMMANDS = {
    "segment": cmd_segment,
    "cluster": cmd_cluster,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "export-ply": cmd_export_ply,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elcois", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p, preds_required=True, scans_required=True):
        p.add_argument("--scans", required=scans_required, help="directory of .bin scans")
        p.add_argument("--preds", required=preds_required, help="directory of .label files")
        p.add_argument("--out", required=scans_required, help="output directory")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--jobs", type=int, default=1, help="parallel scans")

    def clustering(p):
        p.add_argument("--rho", type=float)
        p.add_argument("--theta", type=float, help="degrees")
        p.add_argument("--phi", type=float, help="degrees")
        p.add_argument("--algo", choices=ALGORITHMS)
        p.add_argument("--radius", type=float, help="euclidean search radius (default rho/2)")
        p.add_argument("--no-early-termination", action="store_true")
        p.add_argument("--no-refine", action="store_true")
        p.add_argument("--diffuse-r", dest="diffuse_r", type=float)
        p.add_argument("--min-unknown-points", type=int)

    p = sub.add_parser("segment", help="full open-world segmentation")
    shared(p)
    clustering(p)
    p = sub.add_parser("cluster", help="class-agnostic clustering of whole scans")
    shared(p, preds_required=False)
    clustering(p)
    p = sub.add_parser("refine", help="diffuse-search refinement of known instances only")
    shared(p)
    clustering(p)
    p = sub.add_parser("eval", help="score predictions against ground truth")
    shared(p, scans_required=False)
    p.add_argument("--gt", required=True, help="directory of ground-truth .label files")
    p.add_argument("--thresholds", help="comma-separated IoU thresholds")
    p.add_argument("--aggregate", choices=("pooled", "per_scan"))
    p = sub.add_parser("export-ply", help="write colored PLY files")
    shared(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        manifest = build_manifest(args)
    except (ValueError, OSError, yaml.YAMLError) as exc:
        parser.error(str(exc))
    try:
        return COMMANDS[args.command](manifest)
    except FileNotFoundError as exc:
        log.error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
