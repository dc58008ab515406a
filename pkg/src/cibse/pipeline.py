"""Image-to-detections path: mirror-pad letterbox preprocessing, raw-map
decoding with distribution-focal-expectation boxes, confidence filtering,
class-aware NMS, and back-projection to original image coordinates.

All operations are pure; per-image pipelines can run concurrently with no
shared mutable state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor_ops import Tensor, _sigmoid64, check_tensor

PAD_MODES = ("reflect", "replicate")


@dataclass(frozen=True)
class LetterboxTransform:
    """Affine map from original-image pixels into the square network input."""

    scale: float
    pad_left: int
    pad_top: int
    orig_w: int
    orig_h: int
    target: int = 416


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    box: tuple[float, float, float, float]  # x1, y1, x2, y2

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if x2 < x1 or y2 < y1:
            raise ShapeError(f"detection box {self.box} has negative extent")
        if not 0.0 <= self.score <= 1.0:
            raise ShapeError(f"detection score {self.score} outside [0, 1]")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping.

    Operates on (h, w, c) float64 and is fully deterministic, so resized
    content is bit-stable across runs.
    """
    h, w = img.shape[:2]
    if (out_h, out_w) == (h, w):
        return img.astype(np.float64, copy=True)
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (ys - y0)[:, None, None]
    tx = (xs - x0)[None, :, None]
    img = img.astype(np.float64)
    top = img[y0][:, x0] * (1 - tx) + img[y0][:, x1] * tx
    bot = img[y1][:, x0] * (1 - tx) + img[y1][:, x1] * tx
    return top * (1 - ty) + bot * ty


def _pad_axis(img: np.ndarray, before: int, after: int, axis: int, mode: str) -> np.ndarray:
    if before == 0 and after == 0:
        return img
    size = img.shape[axis]
    if mode == "reflect" and max(before, after) <= size - 1:
        np_mode = "reflect"  # mirror about the edge pixel, edge not duplicated
    else:
        np_mode = "edge"  # content narrower than the pad: duplicate nearby pixels
    pad = [(0, 0)] * img.ndim
    pad[axis] = (before, after)
    return np.pad(img, pad, mode=np_mode)


def mirror_letterbox(
    img: np.ndarray, target: int = 416, pad_mode: str = "reflect"
) -> tuple[Tensor, LetterboxTransform]:
    """Aspect-preserving resize to the target square with mirrored borders.

    The longer side is scaled to exactly `target`; leftover border is split
    evenly (extra pixel to the right/bottom) and filled by reflecting the
    content about its edge, falling back to edge replication where the content
    is narrower than the pad. Output is (1, 3, target, target) float32 in
    [0, 1], RGB; the content region is bit-identical to the plain resize.
    """
    if pad_mode not in PAD_MODES:
        raise ShapeError(f"pad_mode must be one of {PAD_MODES}, got {pad_mode!r}")
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"mirror_letterbox expects a non-empty (h, w, 3) image, got {arr.shape}")
    h, w = arr.shape[:2]
    scale = target / max(h, w)
    new_h = max(1, int(round(h * scale)))
    new_w = max(1, int(round(w * scale)))
    content = resize_bilinear(arr.astype(np.float64) / 255.0, new_h, new_w)
    pad_top = (target - new_h) // 2
    pad_bottom = target - new_h - pad_top
    pad_left = (target - new_w) // 2
    pad_right = target - new_w - pad_left
    mode = "reflect" if pad_mode == "reflect" else "edge"
    canvas = _pad_axis(content, pad_top, pad_bottom, 0, mode)
    canvas = _pad_axis(canvas, pad_left, pad_right, 1, mode)
    tensor = np.ascontiguousarray(canvas.transpose(2, 0, 1)[None], dtype=np.float32)
    return tensor, LetterboxTransform(scale, pad_left, pad_top, w, h, target)


def letterbox_box(t: LetterboxTransform, box) -> tuple[float, float, float, float]:
    """Map an original-image box into letterbox coordinates."""
    x1, y1, x2, y2 = box
    return (
        x1 * t.scale + t.pad_left,
        y1 * t.scale + t.pad_top,
        x2 * t.scale + t.pad_left,
        y2 * t.scale + t.pad_top,
    )


def unletterbox(t: LetterboxTransform, dets: list[Detection]) -> list[Detection]:
    """Map detections back to original-image pixels, clipped to the image."""
    out = []
    for d in dets:
        x1, y1, x2, y2 = d.box
        x1 = min(max((x1 - t.pad_left) / t.scale, 0.0), float(t.orig_w))
        x2 = min(max((x2 - t.pad_left) / t.scale, 0.0), float(t.orig_w))
        y1 = min(max((y1 - t.pad_top) / t.scale, 0.0), float(t.orig_h))
        y2 = min(max((y2 - t.pad_top) / t.scale, 0.0), float(t.orig_h))
        out.append(Detection(d.class_id, d.score, (x1, y1, x2, y2)))
    return out


def decode_predictions(
    raw: list[Tensor],
    strides: tuple[int, ...] = (8, 16, 32),
    reg_max: int = 16,
    conf_thr: float = 0.25,
) -> list[Detection]:
    """Decode raw head maps into letterbox-space detections.

    Per cell (i, j) at stride s the four box channels groups (left, top,
    right, bottom) each hold reg_max logits; the side length is
    s * sum_k k * softmax(logits)_k. The box is anchored at the cell center
    ((j+0.5)s, (i+0.5)s). Score is the sigmoid of the best class logit;
    detections below conf_thr are dropped.
    """
    if len(raw) != len(strides):
        raise ShapeError(f"decode: {len(raw)} raw maps but {len(strides)} strides")
    bins = np.arange(reg_max, dtype=np.float64)
    out: list[Detection] = []
    for t, s in zip(raw, strides):
        check_tensor(t, "raw map")
        if t.shape[0] != 1:
            raise ShapeError(f"decode expects single-image maps, got batch {t.shape[0]}")
        c = t.shape[1]
        nc = c - 4 * reg_max
        if nc < 1:
            raise ShapeError(f"raw map has {c} channels, need > 4*reg_max = {4 * reg_max}")
        h, w = t.shape[2], t.shape[3]
        m = t[0].astype(np.float64).reshape(c, h * w)

        logits = m[: 4 * reg_max].reshape(4, reg_max, h * w)
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        dist = (e * bins[None, :, None]).sum(axis=1) / e.sum(axis=1) * s  # (4, h*w)

        jj, ii = np.meshgrid(np.arange(w), np.arange(h))
        cx = (jj.ravel() + 0.5) * s
        cy = (ii.ravel() + 0.5) * s
        x1, y1 = cx - dist[0], cy - dist[1]
        x2, y2 = cx + dist[2], cy + dist[3]

        cls_logits = m[4 * reg_max :]
        best = cls_logits.argmax(axis=0)
        score = _sigmoid64(cls_logits[best, np.arange(h * w)])
        for idx in np.flatnonzero(score >= conf_thr):
            out.append(
                Detection(
                    int(best[idx]),
                    float(score[idx]),
                    (float(x1[idx]), float(y1[idx]), float(x2[idx]), float(y2[idx])),
                )
            )
    return out


def _iou_1_to_many(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    ix1 = np.maximum(box[0], boxes[:, 0])
    iy1 = np.maximum(box[1], boxes[:, 1])
    ix2 = np.minimum(box[2], boxes[:, 2])
    iy2 = np.minimum(box[3], boxes[:, 3])
    inter = np.maximum(0.0, ix2 - ix1) * np.maximum(0.0, iy2 - iy1)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = area + areas - inter
    return np.divide(inter, union, out=np.zeros_like(union), where=union > 0)


def nms(dets: list[Detection], iou_thr: float = 0.45, max_det: int = 300) -> list[Detection]:
    """Class-aware greedy suppression in descending score order.

    A detection is dropped when a kept detection of the same class overlaps it
    with IoU > iou_thr. Survivors stay score-sorted (ties: lower class id,
    then input order) and are capped at max_det. Idempotent.
    """
    if not 0.0 <= iou_thr <= 1.0:
        raise ShapeError(f"iou_thr {iou_thr} outside [0, 1]")
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].class_id, i))
    boxes = np.array([dets[i].box for i in order], dtype=np.float64)
    classes = np.array([dets[i].class_id for i in order])
    alive = np.ones(len(order), dtype=bool)
    keep: list[int] = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        keep.append(order[pos])
        if len(keep) >= max_det:
            break
        later = alive.copy()
        later[: pos + 1] = False
        same = later & (classes == classes[pos])
        if same.any():
            ious = _iou_1_to_many(boxes[pos], boxes[same])
            cand = np.flatnonzero(same)
            alive[cand[ious > iou_thr]] = False
    return [dets[i] for i in keep]
