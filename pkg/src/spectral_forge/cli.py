"""Command-line entry point.

Subcommands: calibrate, rgb, augment, synthesize, evaluate, rank, demo-train.
All primary outputs are JSON/CSV, byte-identical across runs for the same
inputs and seeds; every JSON report embeds the config that produced it.
Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

from . import __version__
from .augment import AugmentationConfig, apply_augmentation
from .errors import DataError
from .labels import LabelSet, surgical_label_set
from .metrics import (
    NsdThresholds,
    aggregate,
    aggregate_removal,
    removal_impact_matrix,
    score_pair,
)
from .parallel import resolve_threads, thread_map
from .preprocess import CalibrationPair, RgbBands, calibrate, reconstruct_rgb
from .ood import synthesize_dataset
from .ranking import AlgorithmScores, bootstrap_rank, overall_ranking
from .scene import Batch
from .storage import (
    DatasetManifest,
    SceneRef,
    load_cube,
    load_manifest,
    load_mask,
    load_scene,
    save_cube,
    save_manifest,
    save_scene,
)
from .toy import TrainConfig, sweep_p
from .world import SyntheticWorldConfig, generate_world

USAGE_EXIT = 2
DATA_EXIT = 3
INTERNAL_EXIT = 4

REMOVAL_ID_RE = re.compile(r"__removal_(?:zero|bgr)_l(\d+)$")


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_label_set(path: str | None) -> LabelSet:
    return LabelSet.from_json(path) if path else surgical_label_set()


# --- subcommand implementations ------------------------------------------------


def _cmd_calibrate(args) -> int:
    raw = load_cube(args.raw)
    cal = CalibrationPair(white=load_cube(args.white), dark=load_cube(args.dark))
    save_cube(calibrate(raw, cal, clamp_max=args.clamp_max), args.out)
    return 0


def _cmd_rgb(args) -> int:
    cube = load_cube(args.input)
    bands = RgbBands()
    if args.bands:
        with open(args.bands, encoding="utf-8") as fh:
            bands = RgbBands.from_dict(json.load(fh))
    save_cube(reconstruct_rgb(cube, bands), args.out)
    return 0


def _chunk(seq, size):
    if size <= 0:
        return [list(seq)]
    chunks = [list(seq[i:i + size]) for i in range(0, len(seq), size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks


def _cmd_augment(args) -> int:
    label_set = _load_label_set(args.labels)
    manifest = load_manifest(args.manifest)
    overrides = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            overrides = json.load(fh)
    overrides.update(kind=args.kind, probability_p=args.p, seed=args.seed)
    cfg = AugmentationConfig.from_dict(overrides)

    scenes = manifest.load_scenes(label_set)
    out_refs = []
    all_records = []
    out_dir = Path(args.out)
    for batch_index, chunk in enumerate(_chunk(scenes, args.batch_size)):
        batch, records = apply_augmentation(
            Batch(tuple(chunk)), cfg, epoch=args.epoch, batch_index=batch_index)
        all_records.extend(records)
        for scene in batch:
            cube_rel, mask_rel = f"{scene.image_id}.hsi", f"{scene.image_id}.png"
            save_scene(scene, out_dir / cube_rel, out_dir / mask_rel)
            out_refs.append(SceneRef(cube=cube_rel, mask=mask_rel,
                                     subject_id=scene.subject_id,
                                     image_id=scene.image_id))
    name = f"{manifest.name}__aug_{cfg.kind}"
    save_manifest(
        DatasetManifest(name=name, split_tag=manifest.split_tag,
                        scenes=tuple(out_refs)),
        out_dir / f"{name}.json",
    )
    if args.records:
        _write_json(args.records, {
            "config": cfg.to_dict(),
            "records": [r.to_dict() for r in all_records],
        })
    return 0


def _cmd_synthesize(args) -> int:
    label_set = _load_label_set(args.labels)
    manifest = load_manifest(args.manifest)
    background = None
    if args.mode.endswith("_bgr") and args.seed is None:
        raise DataError("*_bgr synthesis needs --seed")
    if args.background:
        mask_path = args.background_mask or re.sub(r"\.hsi$", ".png", args.background)
        background = load_scene(args.background, mask_path, label_set)
    synthesize_dataset(
        manifest, args.mode, label_set, args.out,
        background_source=background, seed=args.seed or 0,
        threads=resolve_threads(args.threads),
    )
    return 0


def _pair_scores(args, label_set, thresholds, metrics):
    pred = load_manifest(args.pred_manifest, check_files=False)
    ref = load_manifest(args.ref_manifest, check_files=False)
    pred_by_id = {r.image_id: r for r in pred.scenes}
    missing = [r.image_id for r in ref.scenes if r.image_id not in pred_by_id]
    if missing:
        raise DataError(f"predictions missing for image ids {missing[:5]}")

    def score_one(ref_ref):
        pred_ref = pred_by_id[ref_ref.image_id]
        pred_mask = load_mask(pred.scene_paths(pred_ref)[1], label_set)
        ref_mask = load_mask(ref.scene_paths(ref_ref)[1], label_set)
        return score_pair(pred_mask, ref_mask, ref_ref.image_id,
                          ref_ref.subject_id, metrics=metrics,
                          thresholds=thresholds)

    threads = resolve_threads(args.threads)
    scores = [s for chunk in thread_map(score_one, ref.scenes, threads)
              for s in chunk]
    return ref, scores


def _cmd_evaluate(args) -> int:
    label_set = _load_label_set(args.labels)
    metrics = tuple(m.strip().upper() for m in args.metric.split(",") if m.strip())
    for m in metrics:
        if m not in ("DSC", "NSD"):
            raise DataError(f"unknown metric {m!r}")
    thresholds = NsdThresholds()
    if args.thresholds:
        with open(args.thresholds, encoding="utf-8") as fh:
            thresholds = NsdThresholds.from_json_payload(json.load(fh), label_set)

    ref, scores = _pair_scores(args, label_set, thresholds, metrics)

    config = {
        "pred_manifest": str(args.pred_manifest),
        "ref_manifest": str(args.ref_manifest),
        "metric": list(metrics),
        "thresholds": {"default": thresholds.default,
                       "per_class": {str(k): v for k, v in
                                     sorted(thresholds.per_class.items())}},
        "removal_aggregate": bool(args.removal_aggregate),
    }
    payload = {"config": config, "algorithm": args.algorithm,
               "dataset": ref.name, "metrics": {}}
    for metric in metrics:
        metric_scores = [s for s in scores if s.metric == metric]
        if args.removal_aggregate:
            by_removed: dict[int, list] = {}
            for s in metric_scores:
                m = REMOVAL_ID_RE.search(s.image_id)
                if not m:
                    raise DataError(
                        f"image id {s.image_id!r} does not encode a removed label"
                    )
                by_removed.setdefault(int(m.group(1)), []).append(s)
            report = aggregate_removal(by_removed)
            if args.impact_csv:
                if not args.baseline_report:
                    raise DataError("--impact-csv needs --baseline-report")
                baseline = _report_from_json(args.baseline_report, metric)
                matrix = removal_impact_matrix(baseline, by_removed)
                Path(args.impact_csv).parent.mkdir(parents=True, exist_ok=True)
                matrix.to_csv(args.impact_csv)
        else:
            report = aggregate(metric_scores)
        payload["metrics"][metric] = report.to_dict()
    _write_json(args.out, payload)
    return 0


def _report_from_json(path: str, metric: str):
    """Rebuild the per-class aggregate of an earlier evaluate run."""
    from .metrics import MetricReport

    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    section = payload["metrics"].get(metric)
    if section is None:
        raise DataError(f"report {path} has no {metric} section")
    per_class = {int(k): float(v) for k, v in section["per_class"].items()}
    return MetricReport(metric=metric, leaves=(), per_subject_class={},
                        per_class=per_class, grand_mean=section["grand_mean"])


def _cmd_rank(args) -> int:
    metric = args.metric.upper()
    by_dataset: dict[str, list[AlgorithmScores]] = {}
    class_orders: dict[str, list[int]] = {}
    for report_path in args.reports:
        with open(report_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        section = payload["metrics"].get(metric)
        if section is None:
            raise DataError(f"report {report_path} has no {metric} section")
        dataset = payload["dataset"]
        per_class = {int(k): float(v) for k, v in section["per_class"].items()}
        order = class_orders.setdefault(dataset, sorted(per_class))
        if sorted(per_class) != order:
            raise DataError(
                f"{report_path}: class set differs from other reports on {dataset}"
            )
        by_dataset.setdefault(dataset, []).append(AlgorithmScores(
            algorithm=payload["algorithm"], dataset=dataset,
            class_values=tuple(per_class[c] for c in order)))

    rankings = [
        bootstrap_rank(scores, n_boot=args.n_boot, seed=args.seed)
        for _, scores in sorted(by_dataset.items())
    ]
    report = overall_ranking(rankings)
    config = {"reports": [str(p) for p in args.reports], "metric": metric,
              "n_boot": args.n_boot, "seed": args.seed}
    _write_json(args.out, {"config": config, **report.to_dict()})
    if args.csv:
        Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
        report.to_bubble_csv(args.csv)
    return 0


def _cmd_demo_train(args) -> int:
    cfg = SyntheticWorldConfig.from_json(args.world)
    workdir = Path(args.workdir) if args.workdir else Path(args.out).parent / "world"
    world = generate_world(cfg, workdir)
    p_grid = [float(x) for x in args.p_grid.split(",") if x.strip()]
    train_cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                            lr_decay=args.lr_decay, seed=args.train_seed)
    rows = sweep_p(world, p_grid, train_cfg=train_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "in_dist_dsc", "ood_dsc", "train_loss"])
        for row in rows:
            writer.writerow([repr(row.probability_p), repr(row.in_dist_score),
                             repr(row.ood_score), repr(row.train_loss)])
    _write_json(str(out) + ".json", {
        "config": {"world": cfg.to_dict(), "p_grid": p_grid,
                   "epochs": args.epochs, "lr": args.lr,
                   "lr_decay": args.lr_decay, "train_seed": args.train_seed},
        "rows": [
            {"p": r.probability_p, "in_dist_dsc": r.in_dist_score,
             "ood_dsc": r.ood_score, "train_loss": r.train_loss}
            for r in rows
        ],
    })
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-forge",
        description="Spectral segmentation augmentation, OOD synthesis, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="white/dark reference calibration")
    p.add_argument("--raw", required=True)
    p.add_argument("--white", required=True)
    p.add_argument("--dark", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clamp-max", type=float, default=2.0)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("rgb", help="reconstruct an RGB cube from spectral bands")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bands", help="JSON with blue/green/red_range_nm")
    p.set_defaults(func=_cmd_rgb)

    p = sub.add_parser("augment", help="apply a batch augmentation to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--records", help="write per-scene records JSON here")
    p.add_argument("--labels", help="label-set JSON (default: surgical 19-class)")
    p.add_argument("--config", help="JSON with extra AugmentationConfig fields")
    p.add_argument("--batch-size", type=int, default=0,
                   help="scenes per batch; 0 = whole manifest")
    p.add_argument("--epoch", type=int, default=0, help="epoch key for RNG streams")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("synthesize", help="build isolation/removal OOD datasets")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", required=True,
                   choices=["isolation_zero", "isolation_bgr",
                            "removal_zero", "removal_bgr"])
    p.add_argument("--out", required=True)
    p.add_argument("--background", help="background cube path (*_bgr modes)")
    p.add_argument("--background-mask", help="default: cube path with .png suffix")
    p.add_argument("--seed", type=int, help="required for *_bgr modes")
    p.add_argument("--labels")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("evaluate", help="score predictions against references")
    p.add_argument("--pred-manifest", required=True)
    p.add_argument("--ref-manifest", required=True)
    p.add_argument("--metric", default="dsc,nsd")
    p.add_argument("--thresholds", help="NSD tolerance JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--algorithm", default="unnamed")
    p.add_argument("--labels")
    p.add_argument("--threads", type=int)
    p.add_argument("--removal-aggregate", action="store_true",
                   help="min over removed-neighbour variants per (image, class)")
    p.add_argument("--impact-csv", help="write the removal-impact matrix CSV")
    p.add_argument("--baseline-report", help="report.json of the unmanipulated run")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("rank", help="bootstrap-rank algorithm reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--metric", default="dsc")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="bubble-plot frequencies CSV")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("demo-train",
                       help="context-collapse experiment on a synthetic world")
    p.add_argument("--world", required=True, help="SyntheticWorldConfig JSON")
    p.add_argument("--p-grid", default="0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--workdir", help="where generated scenes go")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.3)
    p.add_argument("--lr-decay", type=float, default=0.98)
    p.add_argument("--train-seed", type=int, default=0)
    p.set_defaults(func=_cmd_demo_train)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
