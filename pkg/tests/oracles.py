"""Independent brute-force reference implementations used to verify the
library kernels and metrics. Everything here is deliberately written with
plain loops and no shared code with the package, so agreement is meaningful.
"""

from __future__ import annotations

import numpy as np


def assert_close(actual, expected, tol=1e-5, what=""):
    """max |a - e| <= tol * (1 + max|e|)."""
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    assert a.shape == e.shape, f"{what}: shape {a.shape} vs {e.shape}"
    bound = tol * (1.0 + (np.abs(e).max() if e.size else 0.0))
    dev = np.abs(a - e).max() if e.size else 0.0
    assert dev <= bound, f"{what}: max deviation {dev} > {bound}"


def naive_conv2d(x, weight, bias=None, stride=1, pad=0, groups=1):
    """Direct convolution with explicit nested loops (zero padding)."""
    n, c, h, w = x.shape
    c_out, cpg, k, _ = weight.shape
    og = c_out // groups
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c_out, ho, wo), dtype=np.float64)
    for b in range(n):
        for oc in range(c_out):
            g = oc // og
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ic in range(cpg):
                        xc = g * cpg + ic
                        for ky in range(k):
                            iy = oy * stride + ky - pad
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(k):
                                ix = ox * stride + kx - pad
                                if 0 <= ix < w:
                                    acc += float(x[b, xc, iy, ix]) * float(weight[oc, ic, ky, kx])
                    if bias is not None:
                        acc += float(bias[oc])
                    out[b, oc, oy, ox] = acc
    return out.astype(np.float32)


def naive_maxpool(x, k, stride, pad):
    n, c, h, w = x.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    out = np.full((n, c, ho, wo), -np.inf, dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = -np.inf
                    for ky in range(k):
                        iy = oy * stride + ky - pad
                        if iy < 0 or iy >= h:
                            continue
                        for kx in range(k):
                            ix = ox * stride + kx - pad
                            if 0 <= ix < w:
                                best = max(best, float(x[b, ch, iy, ix]))
                    out[b, ch, oy, ox] = best
    return out.astype(np.float32)


def naive_gap(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 1, 1), dtype=np.float64)
    for b in range(n):
        for ch in range(c):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += float(x[b, ch, i, j])
            out[b, ch, 0, 0] = acc / (h * w)
    return out.astype(np.float32)


def naive_upsample2x(x):
    n, c, h, w = x.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=x.dtype)
    for i in range(2 * h):
        for j in range(2 * w):
            out[:, :, i, j] = x[:, :, i // 2, j // 2]
    return out


def reflect_index(i, n):
    """np.pad 'reflect' source index for out-of-range i (edge not duplicated)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def iou_ref(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def quadratic_nms(dets, iou_thr, max_det):
    """O(n^2) reference suppressor: same ordering and suppression rule."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].class_id, i))
    kept = []
    for i in order:
        ok = True
        for j in kept:
            if dets[j].class_id == dets[i].class_id and iou_ref(dets[j].box, dets[i].box) > iou_thr:
                ok = False
                break
        if ok:
            kept.append(i)
            if len(kept) >= max_det:
                break
    return [dets[i] for i in kept]


def greedy_match(preds, gt_boxes, iou_thr):
    """Reference matching: descending score, highest-IoU unmatched truth."""
    flags = [False] * len(preds)
    free = list(range(len(gt_boxes)))
    for i in sorted(range(len(preds)), key=lambda i: (-preds[i].score, i)):
        best_j, best_v = None, 0.0
        for j in free:
            v = iou_ref(preds[i].box, gt_boxes[j])
            if v > best_v:
                best_j, best_v = j, v
        if best_j is not None and best_v >= iou_thr:
            flags[i] = True
            free.remove(best_j)
    return flags, len(free)


def ap_rectangles(flags, n_truth):
    """Exact AP by summing envelope rectangles over distinct recall levels."""
    if n_truth == 0 or not len(flags):
        return 0.0
    tp = fp = 0
    pts = []
    for f in flags:
        tp += bool(f)
        fp += not f
        pts.append((tp / n_truth, tp / (tp + fp)))
    ap, prev = 0.0, 0.0
    for r in sorted({r for r, _ in pts}):
        env = max(p for rr, p in pts if rr >= r)
        ap += (r - prev) * env
        prev = r
    return ap


def ap_interp101_ref(flags, n_truth):
    if n_truth == 0 or not len(flags):
        return 0.0
    tp = fp = 0
    pts = []
    for f in flags:
        tp += bool(f)
        fp += not f
        pts.append((tp / n_truth, tp / (tp + fp)))
    total = 0.0
    for g in range(101):
        r = g / 100.0
        cands = [p for rr, p in pts if rr >= r - 1e-12]
        total += max(cands) if cands else 0.0
    return total / 101.0


def independent_evaluate(preds_by_image, gts, ious, conf_eval=None):
    """From-scratch evaluator mirroring the documented conventions.

    Returns a dict with per-class ap50/ap, map50, map50_95, precision, recall
    and the operating confidence. Matching, pooling, AP and the max-F1 search
    are all re-derived with plain loops.
    """
    classes = sorted({g.class_id for g in gts})
    images = sorted(set(preds_by_image) | {g.image_id for g in gts})

    def pooled_records(c, thr):
        recs = []
        n_truth = 0
        for img in images:
            ps = [d for d in preds_by_image.get(img, []) if d.class_id == c]
            gs = [g.box for g in gts if g.image_id == img and g.class_id == c]
            n_truth += len(gs)
            flags, _ = greedy_match(ps, gs, thr)
            recs.extend((p.score, f) for p, f in zip(ps, flags))
        recs.sort(key=lambda r: -r[0])  # stable: preserves image order on ties
        return recs, n_truth

    ap50 = {}
    ap_all = {}
    pooled50 = {}
    for c in classes:
        aps = []
        for t in ious:
            recs, n_truth = pooled_records(c, t)
            if t == 0.5:
                pooled50[c] = (recs, n_truth)
            aps.append(ap_rectangles([f for _, f in recs], n_truth))
        ap50[c] = aps[list(ious).index(0.5)]
        ap_all[c] = sum(aps) / len(aps)

    thresholds = sorted({s for c in classes for s, _ in pooled50[c][0]}, reverse=True)
    if conf_eval is not None:
        conf = conf_eval
    elif not thresholds:
        conf = 0.0
    else:
        best_f1, conf = -1.0, thresholds[0]
        for th in thresholds:
            f1s = []
            for c in classes:
                recs, n_truth = pooled50[c]
                tp = sum(1 for s, f in recs if s >= th and f)
                k = sum(1 for s, _ in recs if s >= th)
                p = tp / k if k else 0.0
                r = tp / n_truth if n_truth else 0.0
                f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
            f1 = sum(f1s) / len(f1s) if f1s else 0.0
            if f1 > best_f1:
                best_f1, conf = f1, th

    prec = {}
    rec = {}
    for c in classes:
        recs, n_truth = pooled50[c]
        tp = sum(1 for s, f in recs if s >= conf and f)
        k = sum(1 for s, _ in recs if s >= conf)
        prec[c] = tp / k if k else 0.0
        rec[c] = tp / n_truth if n_truth else 0.0

    n = len(classes)
    return {
        "ap50": ap50,
        "map50": sum(ap50.values()) / n if n else 0.0,
        "map50_95": sum(ap_all.values()) / n if n else 0.0,
        "precision": sum(prec.values()) / n if n else 0.0,
        "recall": sum(rec.values()) / n if n else 0.0,
        "conf": conf,
    }


def early_stop_sim(history, patience):
    """Step-by-step patience simulation (counter reset on strict improvement)."""
    best_val, best_e = history[0], 1
    since = 0
    for e in range(2, len(history) + 1):
        if history[e - 1] > best_val:
            best_val, best_e = history[e - 1], e
            since = 0
        else:
            since += 1
            if since == patience:
                return e, best_e
    return len(history), best_e


def splitmix_uniform_ref(seed, name, n):
    """Pure-python reimplementation of the name-keyed uniform stream."""
    m = (1 << 64) - 1

    def mix(z):
        z &= m
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & m
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & m
        return (z ^ (z >> 31)) & m

    h = 0xCBF29CE484222325
    for b in name.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & m
    g = 0x9E3779B97F4A7C15
    key = mix(((seed & m) * g + g) & m) ^ h
    return [(mix((key + i * g) & m) >> 11) * 2.0**-53 for i in range(1, n + 1)]
