"""Command-line interface.

Subcommands: summary, synth, detect, eval, prcurve, bench, split. Exit codes:
0 success, 1 usage error, 2 data error (bad files, malformed inputs),
3 internal error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint, synth_weights
from .dataset import load_dataset, split_dataset
from .errors import CibseError, DataError
from .metrics import GroundTruth, evaluate, pr_csv_text, render_report
from .model import (
    Model,
    VARIANTS,
    build_variant,
    count_parameters,
    estimate_flops,
    format_summary,
    normalize_variant,
    summarize,
    summary_csv,
)
from .pipeline import PAD_MODES, decode_predictions, mirror_letterbox, nms, unletterbox
from .ppm import read_image

DETECTIONS_HEADER = "image,class,score,x1,y1,x2,y2"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we reserve 2 for data errors
        raise UsageError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="cibse", description="Helmet-detection engine and evaluation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_model(sp, imgsz_default):
        sp.add_argument("--model", required=True, help=f"one of: {', '.join(VARIANTS)}")
        sp.add_argument("--nc", type=int, default=2, help="number of classes (default 2)")
        sp.add_argument("--imgsz", type=int, default=imgsz_default)

    sp = sub.add_parser("summary", help="print the layer table, parameter count and GFLOPs")
    add_model(sp, 640)
    sp.add_argument("--csv", help="also write the layer table as CSV")

    sp = sub.add_parser("synth", help="write a deterministic synthetic checkpoint")
    sp.add_argument("--model", required=True)
    sp.add_argument("--nc", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("detect", help="run detection on an image or directory of images")
    add_model(sp, 416)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--conf", type=float, default=0.25)
    sp.add_argument("--iou-nms", type=float, default=0.45)
    sp.add_argument("--max-det", type=int, default=300)
    sp.add_argument("--pad-mode", choices=PAD_MODES, default="reflect")
    sp.add_argument("--out", required=True, help="detections CSV path")
    sp.add_argument("--dump-raw", help="write the raw head maps (single input image only)")

    for name, hlp in (("eval", "evaluate on a dataset split"), ("prcurve", "export PR curves")):
        sp = sub.add_parser(name, help=hlp)
        add_model(sp, 416)
        sp.add_argument("--weights", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--conf", type=float, default=0.001, help="detection confidence floor")
        sp.add_argument("--iou-nms", type=float, default=0.45)
        sp.add_argument("--max-det", type=int, default=300)
        sp.add_argument("--pad-mode", choices=PAD_MODES, default="reflect")
        sp.add_argument("--conf-eval", type=float, help="fixed P/R operating confidence (default: max-F1)")
        sp.add_argument("--out", required=True)

    sp = sub.add_parser("bench", help="time synthetic-weight inference")
    add_model(sp, 416)
    sp.add_argument("--weights", help="checkpoint (default: synthetic, seed 0)")
    sp.add_argument("-n", type=int, default=100, help="number of inferences")

    sp = sub.add_parser("split", help="write train/val/test stem lists for a dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--ratios", type=float, nargs=3, default=(0.7, 0.2, 0.1))
    return p


def _load_model(args) -> Model:
    graph = build_variant(args.model, args.nc)
    weights = load_checkpoint(args.weights)
    return Model(graph, weights)


def _detect_one(model: Model, img, imgsz, conf, iou_thr, max_det, pad_mode):
    x, transform = mirror_letterbox(img, imgsz, pad_mode)
    raw = model.forward(x)
    dets = decode_predictions(raw, model.strides, model.reg_max, conf)
    dets = nms(dets, iou_thr, max_det)
    return unletterbox(transform, dets), raw


def _detection_rows(image_id: str, dets) -> list[str]:
    return [
        f"{image_id},{d.class_id},{d.score:.4f},{d.box[0]:.4f},{d.box[1]:.4f},{d.box[2]:.4f},{d.box[3]:.4f}"
        for d in dets
    ]


def _cmd_summary(args) -> int:
    graph = build_variant(args.model, args.nc)
    rows = summarize(graph)
    print(format_summary(rows))
    print(f"parameters: {count_parameters(graph)}")
    print(f"gflops: {estimate_flops(graph, args.imgsz):.2f} (imgsz={args.imgsz})")
    if args.csv:
        Path(args.csv).write_text(summary_csv(rows), encoding="utf-8")
    return 0


def _cmd_synth(args) -> int:
    graph = build_variant(args.model, args.nc)
    save_checkpoint(synth_weights(graph, args.seed), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_detect(args) -> int:
    model = _load_model(args)
    in_path = Path(args.input)
    if in_path.is_dir():
        if args.dump_raw:
            raise UsageError("--dump-raw requires a single input image")
        images = sorted(in_path.glob("*.ppm"))
        if not images:
            raise DataError(f"{in_path}: no .ppm images found")
    else:
        images = [in_path]
    lines = [DETECTIONS_HEADER]
    for path in images:
        dets, raw = _detect_one(
            model, read_image(path), args.imgsz, args.conf, args.iou_nms, args.max_det, args.pad_mode
        )
        lines.extend(_detection_rows(path.stem, dets))
        if args.dump_raw:
            save_checkpoint({f"p{i + 3}": r for i, r in enumerate(raw)}, args.dump_raw)
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {args.out} ({len(lines) - 1} detections)")
    return 0


def _run_eval(args):
    model = _load_model(args)
    pairs = load_dataset(args.data, args.nc)
    stems = [p.stem for p, _ in pairs]
    train, val, test = split_dataset(stems, seed=args.seed)
    wanted = {"train": set(train), "val": set(val), "test": set(test), "all": set(stems)}[args.split]
    preds_by_image = {}
    gts: list[GroundTruth] = []
    for path, truth in pairs:
        if path.stem not in wanted:
            continue
        dets, _ = _detect_one(
            model, read_image(path), args.imgsz, args.conf, args.iou_nms, args.max_det, args.pad_mode
        )
        preds_by_image[path.stem] = dets
        gts.extend(truth)
    return evaluate(preds_by_image, gts, conf_eval=args.conf_eval)


def _cmd_eval(args) -> int:
    report = _run_eval(args)
    text = render_report(args.model, report)
    Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_prcurve(args) -> int:
    report = _run_eval(args)
    Path(args.out).write_text(pr_csv_text(report), encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _cmd_bench(args) -> int:
    graph = build_variant(args.model, args.nc)
    weights = load_checkpoint(args.weights) if args.weights else synth_weights(graph, 0)
    model = Model(graph, weights)
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(args.imgsz, args.imgsz, 3), dtype=np.uint8)
    _detect_one(model, img, args.imgsz, 0.25, 0.45, 300, "reflect")  # warm-up
    t0 = time.perf_counter()
    for _ in range(args.n):
        _detect_one(model, img, args.imgsz, 0.25, 0.45, 300, "reflect")
    dt = time.perf_counter() - t0
    print(f"{args.n} inferences at {args.imgsz} in {dt:.2f} s")
    print(f"images/sec: {args.n / dt:.2f}")
    return 0


def _cmd_split(args) -> int:
    root = Path(args.data)
    pairs = load_dataset(root)
    stems = [p.stem for p, _ in pairs]
    parts = split_dataset(stems, tuple(args.ratios), args.seed)
    for name, part in zip(("train", "val", "test"), parts):
        (root / f"{name}.txt").write_text("\n".join(part) + ("\n" if part else ""), encoding="utf-8")
        print(f"{name}: {len(part)}")
    return 0


_COMMANDS = {
    "summary": _cmd_summary,
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "prcurve": _cmd_prcurve,
    "bench": _cmd_bench,
    "split": _cmd_split,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "model"):
            args.model = normalize_variant(args.model)
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # unknown variant and friends behave as usage problems
        if isinstance(e, CibseError):
            print(f"error: {e}", file=sys.stderr)
            return 2
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (CibseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - safety net
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())
