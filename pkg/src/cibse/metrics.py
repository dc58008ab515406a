"""Detection evaluation: IoU, prediction-truth matching, precision/recall,
average precision and mAP, PR-curve export, and patience-based early stopping.

Matching is per-class and per-image, greedy in descending score with
highest-IoU tie resolution; each truth matches at most once. mAP averages
per-class AP over the classes present in the ground truth. The aggregate
precision/recall operating point is the confidence that maximizes the
class-mean F1 (ties resolved toward the higher confidence).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .pipeline import Detection

IOU_GRID = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))  # 0.50 .. 0.95


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    box: tuple[float, float, float, float]
    image_id: str


def iou(a, b) -> float:
    """Intersection over union of two (x1, y1, x2, y2) boxes; 0 when the union is empty."""
    ix1, iy1 = max(a[0], b[0]), max(a[1], b[1])
    ix2, iy2 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def match_detections(
    preds: Sequence[Detection], gt_boxes: Sequence, iou_thr: float
) -> tuple[list[bool], int]:
    """TP/FP flags (aligned with the input order) plus the FN count.

    Single image, single class: predictions are visited in descending score;
    each claims the highest-IoU still-unmatched truth when that IoU reaches
    the threshold, otherwise it is a false positive.
    """
    flags = [False] * len(preds)
    taken = [False] * len(gt_boxes)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    for i in order:
        best_j, best_iou = -1, 0.0
        for j, g in enumerate(gt_boxes):
            if taken[j]:
                continue
            v = iou(preds[i].box, g)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou >= iou_thr:
            flags[i] = True
            taken[best_j] = True
    return flags, taken.count(False)


def precision_recall(tp: int, fp: int, fn: int) -> tuple[float, float]:
    """TP/(TP+FP) and TP/(TP+FN); 0 where the denominator is 0."""
    p = tp / (tp + fp) if tp + fp > 0 else 0.0
    r = tp / (tp + fn) if tp + fn > 0 else 0.0
    return p, r


def _pr_arrays(flags: Sequence[bool], n_truth: int) -> tuple[np.ndarray, np.ndarray]:
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(flags, dtype=np.float64))
    recall = tp / n_truth
    precision = tp / (tp + fp)
    return recall, precision


def _envelope(precision: np.ndarray) -> np.ndarray:
    # monotone non-increasing upper envelope: max precision at recall >= r
    return np.maximum.accumulate(precision[::-1])[::-1]


def average_precision(flags: Sequence[bool], n_truth: int, method: str = "interp101") -> float:
    """Area under the precision-recall curve for one class.

    flags must be sorted by confidence, descending. `exact` integrates the
    all-points precision envelope; `interp101` averages the envelope sampled
    at recalls 0.00, 0.01, ..., 1.00.
    """
    if method not in ("exact", "interp101"):
        raise ValueError(f"unknown AP method {method!r}")
    if n_truth < 0:
        raise ValueError(f"n_truth must be >= 0, got {n_truth}")
    if n_truth == 0 or len(flags) == 0:
        return 0.0
    recall, precision = _pr_arrays(flags, n_truth)
    env = _envelope(precision)
    if method == "exact":
        prev = 0.0
        ap = 0.0
        for r, p in zip(recall, env):
            if r > prev:
                ap += (r - prev) * p
                prev = r
        return float(ap)
    grid = np.linspace(0.0, 1.0, 101)
    # epsilon guard so exact rational ties (recall k/n == grid point) are kept
    idx = np.searchsorted(recall, grid - 1e-12, side="left")
    samples = np.where(idx < len(recall), env[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(samples.mean())


@dataclass
class ClassEval:
    ap50: float
    ap50_95: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    pr_points: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class EvalReport:
    per_class: dict[int, ClassEval]
    precision: float
    recall: float
    map50: float
    map50_95: float
    conf: float  # operating confidence for the P/R columns
    tp: int
    fp: int
    fn: int


def _class_flags(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts: Sequence[GroundTruth],
    class_id: int,
    iou_thr: float,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Pooled (scores desc, flags) over all images for one class, plus truth count."""
    gt_by_image: dict[str, list] = {}
    for g in gts:
        if g.class_id == class_id:
            gt_by_image.setdefault(g.image_id, []).append(g.box)
    scores: list[float] = []
    flags: list[bool] = []
    images = sorted(set(preds_by_image) | set(gt_by_image))
    for img in images:
        p = [d for d in preds_by_image.get(img, []) if d.class_id == class_id]
        f, _ = match_detections(p, gt_by_image.get(img, []), iou_thr)
        scores.extend(d.score for d in p)
        flags.extend(f)
    n_truth = sum(len(v) for v in gt_by_image.values())
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable") if scores else []
    s = np.asarray(scores, dtype=np.float64)[order] if scores else np.empty(0)
    fl = np.asarray(flags, dtype=bool)[order] if scores else np.empty(0, dtype=bool)
    return s, fl, n_truth


def evaluate(
    preds_by_image: Mapping[str, Sequence[Detection]],
    gts: Sequence[GroundTruth],
    ious: Iterable[float] = IOU_GRID,
    method: str = "interp101",
    conf_eval: float | None = None,
) -> EvalReport:
    """Full evaluation over a prediction set and ground truth."""
    ious = tuple(ious)
    classes = sorted({g.class_id for g in gts})
    per_class: dict[int, ClassEval] = {}
    pooled: dict[int, tuple[np.ndarray, np.ndarray, int]] = {}

    for c in classes:
        aps = []
        for t in ious:
            s, fl, n_truth = _class_flags(preds_by_image, gts, c, t)
            if t == 0.5:
                pooled[c] = (s, fl, n_truth)
            aps.append(average_precision(fl, n_truth, method))
        ap50 = aps[ious.index(0.5)] if 0.5 in ious else aps[0]
        per_class[c] = ClassEval(ap50, float(np.mean(aps)), 0.0, 0.0, 0, 0, 0)

    # operating point: confidence maximizing the class-mean F1
    all_scores = np.concatenate([pooled[c][0] for c in classes]) if classes else np.empty(0)
    thresholds = np.unique(all_scores)[::-1]
    if conf_eval is not None:
        conf = conf_eval
    elif thresholds.size == 0:
        conf = 0.0
    else:
        best_f1, conf = -1.0, float(thresholds[0])
        for th in thresholds:
            f1s = []
            for c in classes:
                s, fl, n_truth = pooled[c]
                k = int(np.searchsorted(-s, -th, side="right"))
                tp = int(fl[:k].sum())
                p, r = precision_recall(tp, k - tp, n_truth - tp)
                f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
            f1 = float(np.mean(f1s)) if f1s else 0.0
            if f1 > best_f1:
                best_f1, conf = f1, float(th)

    for c in classes:
        s, fl, n_truth = pooled[c]
        k = int(np.searchsorted(-s, -conf, side="right"))
        tp = int(fl[:k].sum())
        fp = k - tp
        fn = n_truth - tp
        p, r = precision_recall(tp, fp, fn)
        ce = per_class[c]
        ce.precision, ce.recall, ce.tp, ce.fp, ce.fn = p, r, tp, fp, fn
        ce.pr_points = _curve_points(fl, n_truth)

    if classes:
        precision = float(np.mean([per_class[c].precision for c in classes]))
        recall = float(np.mean([per_class[c].recall for c in classes]))
        map50 = float(np.mean([per_class[c].ap50 for c in classes]))
        map50_95 = float(np.mean([per_class[c].ap50_95 for c in classes]))
    else:
        precision = recall = map50 = map50_95 = 0.0
    return EvalReport(
        per_class,
        precision,
        recall,
        map50,
        map50_95,
        float(conf),
        sum(per_class[c].tp for c in classes),
        sum(per_class[c].fp for c in classes),
        sum(per_class[c].fn for c in classes),
    )


def _curve_points(flags: np.ndarray, n_truth: int) -> list[tuple[float, float]]:
    """Monotone-envelope PR points at IoU 0.5; empty without detections."""
    if flags.size == 0 or n_truth == 0:
        return []
    recall, precision = _pr_arrays(flags, n_truth)
    env = _envelope(precision)
    points = [(0.0, float(env[0]))]
    for r, p in zip(recall, env):
        pt = (float(r), float(p))
        if pt != points[-1]:
            points.append(pt)
    return points


def _env_at(points: list[tuple[float, float]], r: float) -> float:
    # points are (recall asc, precision non-increasing); envelope value at recall >= r
    for rr, pp in points:
        if rr >= r:
            return pp
    return 0.0


def export_pr_curve(report: EvalReport) -> dict:
    """Per-class envelope point lists plus an all-classes mean curve."""
    out: dict = {c: list(ce.pr_points) for c, ce in report.per_class.items()}
    grid = np.linspace(0.0, 1.0, 101)
    if report.per_class:
        mean = [
            (float(r), float(np.mean([_env_at(ce.pr_points, r) for ce in report.per_class.values()])))
            for r in grid
        ]
    else:
        mean = []
    out["mean"] = mean
    return out


def pr_csv_text(report: EvalReport) -> str:
    """CSV rows `class,recall,precision` (LF endings, 6-decimal fixed)."""
    curves = export_pr_curve(report)
    lines = ["class,recall,precision"]
    for c in sorted(k for k in curves if k != "mean"):
        for r, p in curves[c]:
            lines.append(f"{c},{r:.6f},{p:.6f}")
    for r, p in curves["mean"]:
        lines.append(f"mean,{r:.6f},{p:.6f}")
    return "\n".join(lines) + "\n"


def render_report(model_name: str, report: EvalReport) -> str:
    """One table row per model: Model | Precision | Recall | mAP50 | mAP50-95."""
    headers = ("Model", "Precision", "Recall", "mAP50", "mAP50-95")
    row = (
        model_name,
        f"{report.precision:.3f}",
        f"{report.recall:.3f}",
        f"{report.map50:.3f}",
        f"{report.map50_95:.3f}",
    )
    widths = [max(len(h), len(v)) for h, v in zip(headers, row)]
    head = " | ".join(h.ljust(w) for h, w in zip(headers, widths))
    body = " | ".join(v.ljust(w) for v, w in zip(row, widths))
    return head + "\n" + body + "\n"


def early_stop(history: Sequence[float], patience: int = 10) -> tuple[int, int]:
    """Patience early stopping over a validation-metric history.

    Epochs are 1-based. best_epoch is the first occurrence of the maximum seen
    up to the stop; training stops at the first epoch whose distance from the
    running best reaches `patience` (improvement = strictly greater), else at
    the end of the history. Returns (stop_epoch, best_epoch).
    """
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    if len(history) == 0:
        raise ValueError("early_stop: empty history")
    best_epoch, best_val = 1, history[0]
    for e in range(2, len(history) + 1):
        if history[e - 1] > best_val:
            best_epoch, best_val = e, history[e - 1]
        elif e - best_epoch == patience:
            return e, best_epoch
    return len(history), best_epoch
