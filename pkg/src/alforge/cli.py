"""Command-line entry point wiring the pipeline: analyze -> filter -> mosaic ->
score/select (AL rounds) -> eval -> report.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .active_learning import (
    SelectionPolicy,
    initial_state,
    query_top_k,
    run_rounds,
    score_images,
)
from .costmodel import composite_cost, format_report
from .dataset import Dataset, load_dataset, save_dataset, serialize_label_file, summarize
from .detectors import (
    ExternalDetector,
    SyntheticDetector,
    SyntheticDetectorConfig,
    load_external_predictions,
)
from .errors import ConfigInvalid, DataError
from .metrics import MatchConfig, evaluate
from .mosaic import (
    MosaicSpec,
    ScheduleSpec,
    build_epoch_plan,
    compose_mosaic,
    cutoff_for_usage_ratio,
    mosaic_schedule,
)
from .reports import (
    growth_grid,
    read_round_log,
    score_grid,
    stage_rows_from_detail,
    stage_table,
    write_round_detail,
    write_round_log,
)
from .scale import ScalePolicy, filter_dataset, scale_histogram, scale_records

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

CONFIG_ENV = "ALFORGE_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scale_policy(args) -> ScalePolicy:
    return ScalePolicy(
        small_threshold=args.small_threshold,
        extreme_small_threshold=args.extreme_threshold,
        on_empty_image="drop" if getattr(args, "drop_empty", False) else "keep",
    )


def cmd_analyze(args) -> int:
    dataset = load_dataset(args.dataset)
    policy = _scale_policy(args)
    out = _out_dir(args)
    records = list(dataset.records.values())
    with open(out / "scale_records.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "box_index", "class_id", "area_ratio", "scale_class"])
        for rec in scale_records(records, policy):
            writer.writerow([rec.image_id, rec.box_index, rec.class_id,
                             f"{rec.area_ratio:.8f}", rec.scale_class])
    edges = [0.0, policy.extreme_small_threshold, policy.small_threshold,
             0.01, 0.05, 0.25, 1.0]
    hist = scale_histogram(records, edges, len(dataset.classes))
    with open(out / "scale_histogram.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi",
                         "count_total", *[f"count_c{i}" for i in range(len(dataset.classes))]])
        for k in range(len(hist.counts_total)):
            writer.writerow([hist.bin_edges[k], hist.bin_edges[k + 1],
                             hist.counts_total[k],
                             *[hist.counts_per_class[c][k] for c in range(len(dataset.classes))]])
    summary = summarize(dataset.records.values(), len(dataset.classes))
    print(f"analyzed {len(records)} images; active policy: "
          f"small<{policy.small_threshold}, extreme_small<{policy.extreme_small_threshold}")
    for split, count in summary.image_counts.items():
        print(f"  {split}: {count} images, {summary.total_annotations(split)} annotations")
    return EXIT_OK


def cmd_filter(args) -> int:
    dataset = load_dataset(args.dataset)
    policy = _scale_policy(args)
    filtered, report = filter_dataset(dataset, policy)
    out = _out_dir(args)
    save_dataset(filtered, out)
    with open(out / "removal_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "class_name", "removed"])
        for class_id, removed in enumerate(report.removed_per_class):
            writer.writerow([class_id, dataset.classes.name(class_id), removed])
    print(f"removed {report.removed_total} extreme-small annotations "
          f"({len(report.images_dropped)} images dropped); policy: "
          f"extreme_small<{policy.extreme_small_threshold}")
    return EXIT_OK


def _schedule_spec(args) -> ScheduleSpec:
    cutoff = args.cutoff
    if cutoff is None:
        cutoff = cutoff_for_usage_ratio(args.total_epochs, args.usage_ratio)
    return ScheduleSpec(args.total_epochs, cutoff)


def cmd_schedule(args) -> int:
    spec = _schedule_spec(args)
    writer = csv.writer(sys.stdout)
    writer.writerow(["epoch", "mosaic_on"])
    for e in range(spec.total_epochs):
        writer.writerow([e, int(mosaic_schedule(e, spec))])
    return EXIT_OK


def _load_image(root: Path, record) -> np.ndarray:
    images_dir = root / "images"
    for path in sorted(images_dir.glob(f"{record.image_id}.*")):
        from PIL import Image

        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"))
    # Label-only datasets still exercise the full geometry path.
    return np.zeros((record.height, record.width, 3), dtype=np.uint8)


def cmd_mosaic(args) -> int:
    from PIL import Image

    root = Path(args.dataset)
    dataset = load_dataset(root)
    spec = MosaicSpec(
        variant=f"mosaic{args.variant}",
        output_size=(args.size, args.size),
        rng_seed=args.seed,
    )
    schedule = _schedule_spec(args)
    ids = dataset.split_ids("train") or sorted(dataset.records)
    if not ids:
        raise DataError("dataset has no images to compose")
    plan = build_epoch_plan(ids, spec, schedule, args.epoch)
    out = _out_dir(args)
    labels_dir = out / "labels"
    labels_dir.mkdir(exist_ok=True)
    images_dir = out / "images"
    images_dir.mkdir(exist_ok=True)
    written = 0
    for item in plan.items:
        if written >= args.count:
            break
        if item.kind != "mosaic":
            continue
        sources = [(dataset.records[i], _load_image(root, dataset.records[i]))
                   for i in item.image_ids]
        rng = np.random.default_rng(list(item.sample_seed))
        sample = compose_mosaic(sources, spec, rng)
        stem = f"mosaic_e{args.epoch}_{written:05d}"
        Image.fromarray(sample.image).save(images_dir / f"{stem}.png")
        (labels_dir / f"{stem}.txt").write_text(serialize_label_file(sample.labels))
        written += 1
    if plan.mosaic_on:
        print(f"wrote {written} {spec.variant} composites to {out}")
    else:
        print(f"mosaic disabled at epoch {args.epoch} (M(e)=0); nothing written")
    return EXIT_OK


def _pool_ids(args, dataset: Dataset) -> list[str]:
    if args.pool:
        return [l.strip() for l in Path(args.pool).read_text().splitlines() if l.strip()]
    return dataset.split_ids("unlabeled-pool")


def cmd_score(args) -> int:
    dataset = load_dataset(args.dataset)
    ids = _pool_ids(args, dataset)
    preds = load_external_predictions(args.preds, ids, len(dataset.classes),
                                      strict=args.strict)
    reports = score_images(preds, args.method, SelectionPolicy(method=args.method))
    writer = csv.writer(sys.stdout)
    writer.writerow(["image_id", "uncertainty", "detections"])
    for image_id in sorted(reports, key=lambda i: (-reports[i].value, i)):
        r = reports[image_id]
        writer.writerow([image_id, f"{r.value:.6f}", r.detection_count])
    return EXIT_OK


def cmd_select(args) -> int:
    dataset = load_dataset(args.dataset)
    ids = _pool_ids(args, dataset)
    preds = load_external_predictions(args.preds, ids, len(dataset.classes),
                                      strict=args.strict)
    policy = SelectionPolicy(method=args.method, k=args.k, pool_update=args.update)
    reports = score_images(preds, policy.method, policy)
    selected = query_top_k(reports, policy)
    out = _out_dir(args)
    manifest = out / f"round{args.round}.txt"
    manifest.write_text("".join(f"{i}\n" for i in selected))
    print(f"selected {len(selected)} images -> {manifest}")
    return EXIT_OK


def cmd_eval(args) -> int:
    dataset = load_dataset(args.gt)
    split_ids = dataset.split_ids(args.split) if args.split else sorted(dataset.records)
    records = [dataset.records[i] for i in split_ids]
    preds = load_external_predictions(args.preds, split_ids, len(dataset.classes),
                                      strict=args.strict)
    summary = evaluate(preds, records, MatchConfig(iou_threshold=args.iou))
    writer = csv.writer(sys.stdout)
    writer.writerow(["class", "AP", "TP", "FP", "FN"])
    for class_id in sorted(summary.per_class_ap):
        ap = summary.per_class_ap[class_id]
        tp, fp, fn = summary.counts[class_id]
        writer.writerow([dataset.classes.name(class_id),
                         "" if ap is None else f"{ap:.4f}", tp, fp, fn])
    map_cell = "" if summary.map50 is None else f"{summary.map50:.4f}"
    writer.writerow(["mAP50", map_cell, "", "", ""])
    writer.writerow(["P", f"{summary.precision:.4f}", "", "", ""])
    writer.writerow(["R", f"{summary.recall:.4f}", "", "", ""])
    return EXIT_OK


def cmd_cost(args) -> int:
    tree = json.loads(Path(args.config).read_text())
    report = composite_cost(tree)
    print(format_report(report))
    print(f"Total: {report.params / 1e6:.2f}M params, {report.flops / 1e9:.2f}G FLOPs")
    return EXIT_OK


def _make_detector(spec: str, num_classes: int, seed: int):
    kind, _, arg = spec.partition(":")
    if kind == "synthetic":
        if arg:
            config = SyntheticDetectorConfig.from_file(arg)
        else:
            config = SyntheticDetectorConfig(rng_seed=seed)
        return SyntheticDetector(config)
    if kind == "external":
        if not arg:
            raise ConfigInvalid("external detector needs a directory: external:<dir>")
        return ExternalDetector(arg, num_classes)
    raise ConfigInvalid(f"detector must be synthetic[:<cfg>] or external:<dir>, got {spec!r}")


def cmd_al_sim(args) -> int:
    dataset = load_dataset(args.dataset)
    labeled = dataset.split_ids("train")
    pool = dataset.split_ids("unlabeled-pool")
    if not pool:
        raise DataError("dataset has no unlabeled pool (pool.txt)")
    detector = _make_detector(args.detector, len(dataset.classes), args.seed)
    policy = SelectionPolicy(method=args.method, k=args.k, pool_update=args.update)
    state = initial_state(labeled, pool)
    eval_records = [dataset.records[i] for i in dataset.split_ids("valid")] or None
    state, reports = run_rounds(state, detector, policy, args.rounds, dataset,
                                eval_records=eval_records if args.evaluate else None)
    out = _out_dir(args)
    write_round_log(out / f"{args.method}_{args.update}.csv", reports,
                    len(dataset.classes))
    write_round_detail(out / f"{args.method}_{args.update}_detail.csv", reports,
                       len(dataset.classes))
    selections_dir = out / "selections"
    selections_dir.mkdir(exist_ok=True)
    for record in state.history:
        (selections_dir / f"round{record.round}.txt").write_text(
            "".join(f"{i}\n" for i in record.selected))
    sizes = " ".join(str(r.labeled_size) for r in reports)
    print(f"{args.method}/{args.update}: labeled sizes {sizes}")
    return EXIT_OK


def cmd_report(args) -> int:
    logs_dir = Path(args.logs)
    logs: dict[tuple[str, str], list[dict[str, str]]] = {}
    details: list[Path] = []
    for path in sorted(logs_dir.glob("*.csv")):
        stem = path.stem
        if stem.endswith("_detail"):
            details.append(path)
            continue
        parts = stem.rsplit("_", 1)
        if len(parts) != 2:
            continue
        method, strategy = parts
        logs[(method, strategy)] = read_round_log(path)
    if not logs:
        raise DataError(f"no round logs found in {logs_dir}")
    out = _out_dir(args)
    growth_csv, growth_txt = growth_grid(logs)
    (out / "growth_grid.csv").write_text(growth_csv)
    (out / "growth_grid.txt").write_text(growth_txt)
    scores_csv, scores_txt = score_grid(logs)
    (out / "score_grid.csv").write_text(scores_csv)
    (out / "score_grid.txt").write_text(scores_txt)
    if details:
        detail = read_round_log(details[0])
        rows = stage_rows_from_detail(detail)
        stage_csv, stage_txt = stage_table(rows, args.class_names.split(","))
        (out / "stage_table.csv").write_text(stage_csv)
        (out / "stage_table.txt").write_text(stage_txt)
    print(growth_txt)
    print(scores_txt)
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="alforge", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="out")
        p.add_argument("--threads", type=int, default=1)
        return p

    p = add("analyze", cmd_analyze, help="object-scale statistics for a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--small-threshold", type=float, default=0.0058)
    p.add_argument("--extreme-threshold", type=float, default=0.001)

    p = add("filter", cmd_filter, help="remove extreme-small annotations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--small-threshold", type=float, default=0.0058)
    p.add_argument("--extreme-threshold", type=float, default=0.001)
    p.add_argument("--drop-empty", action="store_true")

    p = add("schedule", cmd_schedule, help="print the mosaic on/off table")
    p.add_argument("--total-epochs", type=int, required=True)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--usage-ratio", type=float, default=0.8)

    p = add("mosaic", cmd_mosaic, help="write mosaic composites and labels")
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", type=int, choices=(4, 9), default=9)
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--total-epochs", type=int, default=500)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--usage-ratio", type=float, default=0.8)
    p.add_argument("--size", type=int, default=640)
    p.add_argument("--count", type=int, default=8)

    p = add("score", cmd_score, help="image-level uncertainty from predictions")
    p.add_argument("--dataset", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--pool", default=None)
    p.add_argument("--method", choices=("average", "max", "sum"), default="max")
    p.add_argument("--strict", action="store_true")

    p = add("select", cmd_select, help="Top-K selection manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--preds", required=True)
    p.add_argument("--pool", default=None)
    p.add_argument("--method", choices=("average", "max", "sum"), default="max")
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--update", choices=("move", "copy"), default="move")
    p.add_argument("--round", type=int, default=1)
    p.add_argument("--strict", action="store_true")

    p = add("eval", cmd_eval, help="P/R/mAP50 against ground truth")
    p.add_argument("--preds", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--split", default="valid")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--strict", action="store_true")

    p = add("cost", cmd_cost, help="parameter/FLOP accounting for a block tree")
    p.add_argument("--config", required=True)

    p = add("al-sim", cmd_al_sim, help="closed-loop active learning simulation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--detector", default="synthetic")
    p.add_argument("--method", choices=("average", "max", "sum"), default="max")
    p.add_argument("--k", type=int, default=500)
    p.add_argument("--update", choices=("move", "copy"), default="move")
    p.add_argument("--rounds", type=int, default=8)
    p.add_argument("--evaluate", action="store_true")

    p = add("report", cmd_report, help="render appendix-shaped summary tables")
    p.add_argument("--logs", required=True)
    p.add_argument("--class-names", default="tomato,green tomato,tomato flower")

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if CONFIG_ENV in os.environ:
        # Config file supplies defaults for the global flags; explicit flags win.
        try:
            defaults = json.loads(Path(os.environ[CONFIG_ENV]).read_text())
        except Exception:
            defaults = {}
        for key in ("seed", "out", "threads"):
            flag = f"--{key}"
            if key in defaults and flag not in argv:
                argv += [flag, str(defaults[key])]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
