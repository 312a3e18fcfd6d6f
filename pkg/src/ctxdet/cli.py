"""Command-line interface.

Exit codes: 0 success, 1 usage errors, 2 data errors (malformed or
inconsistent input files). Every run logs the resolved configuration; the
seed-dependent commands also log their seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import NoReturn

from .config import ToolConfig, load_tool_config
from .coco_io import (
    DatasetBundle,
    load_annotations,
    load_detections,
    save_annotations,
    save_detections,
)
from .errors import DataError
from .features import (
    build_cooccurrence,
    build_training_set,
    feature_length,
    load_feature_csv,
    save_cooccurrence_csv,
    save_feature_csv,
)
from .geometry import BBox
from .metrics import compute_metrics, match_detections, save_metrics_json
from .network import load_model, save_model, train_scg
from .pipelines import (
    SceneDetections,
    read_audit_log,
    relabel_scene,
    rescore_scene,
    write_audit_log,
)
from .render import OverlayEntry, render_entries
from .synth import SynthSpec, default_rules, generate

__all__ = ["build_parser", "main", "entrypoint"]

logger = logging.getLogger("ctxdet")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit 1 instead of 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_io_arguments(parser: argparse.ArgumentParser, detections: bool = True) -> None:
    parser.add_argument("--annotations", required=True, help="annotations JSON path")
    if detections:
        parser.add_argument("--detections", required=True, help="detections JSON path")
        parser.add_argument(
            "--threshold",
            type=float,
            default=0.0,
            help="drop detections scoring below this (default 0.0)",
        )


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON tool configuration")
    common.add_argument(
        "--log-level",
        default="info",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity (default info)",
    )

    parser = _Parser(
        prog="ctxdet",
        description="Rescore and relabel object-detection outputs using scene context.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "cooc", parents=[common], help="write the class co-occurrence matrix CSV"
    )
    _add_io_arguments(p, detections=False)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_cooc)

    p = sub.add_parser(
        "features", parents=[common], help="export contextual feature rows as CSV"
    )
    _add_io_arguments(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", parents=[common], help="train the rescoring model")
    _add_io_arguments(p)
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument(
        "--features",
        help="reuse a previously exported feature CSV instead of rebuilding",
    )
    p.add_argument("--hidden", type=int, help="hidden units (overrides config)")
    p.add_argument("--epochs", type=int, help="max training epochs (overrides config)")
    p.add_argument("--seed", type=int, help="training seed (overrides config)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser(
        "rescore", parents=[common], help="rescore detections with a trained model"
    )
    _add_io_arguments(p)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--out", required=True, help="output detections JSON path")
    p.set_defaults(func=_cmd_rescore)

    p = sub.add_parser(
        "relabel",
        parents=[common],
        help="rescore, then relabel or remove low-scoring detections",
    )
    _add_io_arguments(p)
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--out", required=True, help="output detections JSON path")
    p.add_argument(
        "--t",
        type=float,
        default=None,
        help="relabeling threshold (default from config, 0.4)",
    )
    p.add_argument("--audit", help="also write a JSONL audit log here")
    p.set_defaults(func=_cmd_relabel)

    p = sub.add_parser(
        "eval", parents=[common], help="evaluate detections against annotations"
    )
    _add_io_arguments(p)
    p.add_argument(
        "--mode",
        default="detector",
        choices=["detector", "rescore", "relabel"],
        help="evaluate raw, rescored, or relabeled detections",
    )
    p.add_argument("--model", help="model JSON (required for rescore/relabel modes)")
    p.add_argument(
        "--t", type=float, default=None, help="relabeling threshold for relabel mode"
    )
    p.add_argument("--out", help="write the metrics report JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser(
        "synth", parents=[common], help="generate a synthetic planted-rule dataset"
    )
    p.add_argument("--out-dir", required=True, help="directory for the output files")
    p.add_argument("--images", type=int, default=100)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument(
        "--subjects",
        type=int,
        nargs=2,
        default=[2, 3],
        metavar=("LO", "HI"),
        help="rule-bearing objects per image (default 2 3)",
    )
    p.add_argument(
        "--extras",
        type=int,
        nargs=2,
        default=[1, 2],
        metavar=("LO", "HI"),
        help="context filler objects per image (default 1 2)",
    )
    p.add_argument("--violation-rate", type=float, default=0.5)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--rules",
        default="default",
        choices=["default", "none"],
        help="planted rule set (default: the three-rule world)",
    )
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser(
        "viz", parents=[common], help="render an SVG overlay for one image"
    )
    _add_io_arguments(p)
    p.add_argument("--image-id", type=int, required=True)
    p.add_argument("--out", required=True, help="output SVG path")
    p.add_argument(
        "--audit",
        help="relabeling audit JSONL; removed detections are drawn in white",
    )
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def _load_bundle(args: argparse.Namespace) -> DatasetBundle:
    bundle = load_annotations(args.annotations)
    if getattr(args, "detections", None):
        load_detections(args.detections, bundle, args.threshold)
    return bundle


def _cmd_cooc(args: argparse.Namespace, cfg: ToolConfig) -> int:
    bundle = _load_bundle(args)
    per_image = [
        [gt.class_id for gt in bundle.gt_by_image[image_id]]
        for image_id in sorted(bundle.images)
    ]
    matrix = build_cooccurrence(per_image, bundle.vocab)
    save_cooccurrence_csv(matrix, args.out)
    print(f"wrote {bundle.vocab.size}x{bundle.vocab.size} co-occurrence matrix to {args.out}")
    return 0


def _cmd_features(args: argparse.Namespace, cfg: ToolConfig) -> int:
    bundle = _load_bundle(args)
    x, y = build_training_set(
        bundle.dets_by_image, bundle.gt_by_image, cfg.relations, bundle.vocab
    )
    save_feature_csv(x, y, args.out)
    print(f"wrote {len(x)} feature rows ({x.shape[1]} columns) to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace, cfg: ToolConfig) -> int:
    bundle = _load_bundle(args)
    if args.features:
        x, y = load_feature_csv(args.features)
        expected = feature_length(cfg.relations, bundle.vocab.size)
        if x.shape[1] != expected:
            raise DataError(
                f"{args.features}: rows have {x.shape[1]} columns, the relation "
                f"config and vocabulary imply {expected}"
            )
    else:
        x, y = build_training_set(
            bundle.dets_by_image, bundle.gt_by_image, cfg.relations, bundle.vocab
        )
    train_cfg = cfg.train
    if args.hidden is not None:
        train_cfg = replace(train_cfg, hidden=args.hidden)
    if args.epochs is not None:
        train_cfg = replace(train_cfg, max_epochs=args.epochs)
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)
    logger.info("training seed: %d", train_cfg.seed)
    model, report = train_scg(
        x,
        y,
        train_cfg,
        vocabulary=bundle.vocab.names,
        relation_config=cfg.relations,
    )
    save_model(model, args.out)
    print(
        f"trained on {len(x)} rows; stopped after {report.epochs_run} epochs "
        f"({report.stop_reason}), train loss {report.final_train_loss:.6f}; "
        f"wrote {args.out}"
    )
    return 0


def _cmd_rescore(args: argparse.Namespace, cfg: ToolConfig) -> int:
    model = load_model(args.model)
    bundle = _load_bundle(args)
    out: dict[int, list] = {}
    skipped = 0
    for scene in bundle.scenes(args.threshold):
        if not scene.detections:
            continue
        if len(scene.detections) < 2:
            skipped += 1
        result = rescore_scene(model, scene)
        out[scene.image_id] = list(result.detections)
    save_detections(out, bundle.vocab, args.out)
    total = sum(len(v) for v in out.values())
    print(
        f"rescored {total} detections across {len(out)} images "
        f"({skipped} mono-object images passed through); wrote {args.out}"
    )
    return 0


def _cmd_relabel(args: argparse.Namespace, cfg: ToolConfig) -> int:
    t = args.t if args.t is not None else cfg.relabel_t
    model = load_model(args.model)
    bundle = _load_bundle(args)
    out: dict[int, list] = {}
    records = []
    counts = {"kept": 0, "relabeled": 0, "removed": 0}
    skipped = 0
    for scene in bundle.scenes(args.threshold):
        if not scene.detections:
            continue
        result = relabel_scene(model, scene, t)
        if result.skipped:
            skipped += 1
        if result.scene.detections:
            out[scene.image_id] = list(result.scene.detections)
        records.extend(result.records)
        for record in result.records:
            counts[record.status] += 1
    save_detections(out, bundle.vocab, args.out)
    if args.audit:
        write_audit_log(records, args.audit)
    print(
        f"relabeling at t={t:g}: {counts['kept']} kept, "
        f"{counts['relabeled']} relabeled, {counts['removed']} removed "
        f"({skipped} mono-object images passed through); wrote {args.out}"
    )
    return 0


def _cmd_eval(args: argparse.Namespace, cfg: ToolConfig) -> int:
    if args.mode in ("rescore", "relabel") and not args.model:
        print(
            f"ctxdet eval: error: --model is required for --mode {args.mode}",
            file=sys.stderr,
        )
        return 1
    bundle = _load_bundle(args)
    dets = bundle.dets_by_image
    if args.mode != "detector":
        model = load_model(args.model)
        t = args.t if args.t is not None else cfg.relabel_t
        new: dict[int, list] = {}
        for scene in bundle.scenes(args.threshold):
            if not scene.detections:
                continue
            if args.mode == "rescore":
                new[scene.image_id] = list(rescore_scene(model, scene).detections)
            else:
                result = relabel_scene(model, scene, t)
                if result.scene.detections:
                    new[scene.image_id] = list(result.scene.detections)
        dets = new
    report = compute_metrics(
        dets, bundle.gt_by_image, bundle.vocab, iou_threshold=0.5, threshold=args.threshold
    )
    if args.out:
        save_metrics_json(report, args.out)
    print(
        f"mode={args.mode} auc={report['auc']:.4f} map50={report['map50']:.4f} "
        f"f1={report['f1']:.4f} precision={report['precision']:.4f} "
        f"recall={report['recall']:.4f}"
    )
    return 0


def _cmd_synth(args: argparse.Namespace, cfg: ToolConfig) -> int:
    rules = default_rules() if args.rules == "default" else ()
    spec = SynthSpec(
        classes=args.classes,
        images=args.images,
        objects_per_image=tuple(args.subjects),
        rules=rules,
        violation_rate=args.violation_rate,
        label_noise=args.label_noise,
        extra_objects=tuple(args.extras),
        relations=cfg.relations,
        seed=args.seed,
    )
    logger.info("generation seed: %d", spec.seed)
    bundle = generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    ann_path = os.path.join(args.out_dir, "annotations.json")
    det_path = os.path.join(args.out_dir, "detections.json")
    save_annotations(bundle, ann_path)
    save_detections(bundle.dets_by_image, bundle.vocab, det_path)
    print(
        f"generated {spec.images} images, {bundle.meta['detections']} detections "
        f"({bundle.meta['planted_mislabels']} planted mislabels, "
        f"{bundle.meta['noise_mislabels']} noise); wrote {ann_path} and {det_path}"
    )
    return 0


def _cmd_viz(args: argparse.Namespace, cfg: ToolConfig) -> int:
    bundle = _load_bundle(args)
    if args.image_id not in bundle.images:
        raise DataError(f"unknown image id {args.image_id}")
    dets = bundle.dets_by_image.get(args.image_id, [])
    result = match_detections(dets, bundle.gt_by_image[args.image_id], 0.5)
    entries = [
        OverlayEntry(
            box=det.box,
            text=f"{bundle.vocab.names[det.class_id]} {det.confidence:.4f}",
            status="correct" if correct else "incorrect",
        )
        for det, correct in zip(dets, result.det_correct)
    ]
    if args.audit:
        for record in read_audit_log(args.audit):
            if record["image_id"] != args.image_id or record["status"] != "removed":
                continue
            shown = record.get("rescored")
            if shown is None:
                shown = record["original_score"]
            entries.append(
                OverlayEntry(
                    box=BBox(*record["box"]),
                    text=f"{bundle.vocab.names[record['original_label']]} {shown:.4f}",
                    status="removed",
                )
            )
    info = bundle.images[args.image_id]
    size = (info.get("width") or 960, info.get("height") or 720)
    with open(args.out, "w") as fh:
        fh.write(render_entries(entries, size))
    print(f"wrote overlay with {len(entries)} boxes to {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace, cfg: ToolConfig) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    logging.basicConfig(
        level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_tool_config(args.config) if args.config else ToolConfig()
        logger.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
        return args.func(args, cfg)
    except (DataError, OSError) as exc:
        logger.error("%s", exc)
        return 2


def entrypoint() -> None:
    sys.exit(main())
