"""Pure-Python/numpy kernels. Reference backend; ``_ckernels.pyx`` mirrors it."""

from __future__ import annotations

import numpy as np

from .geometry import iou_raw

# pair rows: (source modality, source index, partner index or -1)
SRC_RGB = 0
SRC_THERMAL = 1


def iou_matrix(a, b):
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    out = np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    al = a.tolist()
    bl = b.tolist()
    for i, ra in enumerate(al):
        for j, rb in enumerate(bl):
            out[i, j] = iou_raw(ra[0], ra[1], ra[2], ra[3], rb[0], rb[1], rb[2], rb[3])
    return out


def consumption_order(scores_rgb, scores_t):
    """Indices into the concatenated list, by score desc, RGB first, then ingest index."""
    scores = np.concatenate([np.asarray(scores_rgb, dtype=np.float64),
                             np.asarray(scores_t, dtype=np.float64)])
    n_rgb = len(scores_rgb)
    mod = np.zeros(scores.shape[0], dtype=np.int64)
    mod[n_rgb:] = 1
    idx = np.arange(scores.shape[0], dtype=np.int64)
    idx[n_rgb:] -= n_rgb
    return np.lexsort((idx, mod, -scores)).astype(np.int64)


def dpair_indices(boxes_rgb, scores_rgb, boxes_t, scores_t, tau):
    n_rgb = len(scores_rgb)
    n_t = len(scores_t)
    ious = iou_matrix(boxes_rgb, boxes_t)
    used_rgb = [False] * n_rgb
    used_t = [False] * n_t
    rows = []
    for k in consumption_order(scores_rgb, scores_t).tolist():
        if k < n_rgb:
            i = k
            if used_rgb[i]:
                continue
            used_rgb[i] = True
            best, best_iou = -1, tau
            for j in range(n_t):
                if not used_t[j] and ious[i, j] > best_iou:
                    best, best_iou = j, ious[i, j]
            if best >= 0:
                used_t[best] = True
            rows.append((SRC_RGB, i, best))
        else:
            j = k - n_rgb
            if used_t[j]:
                continue
            used_t[j] = True
            best, best_iou = -1, tau
            for i in range(n_rgb):
                if not used_rgb[i] and ious[i, j] > best_iou:
                    best, best_iou = i, ious[i, j]
            if best >= 0:
                used_rgb[best] = True
            rows.append((SRC_THERMAL, j, best))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)


def greedy_match(det_boxes, gt_boxes, gt_ignore, thr):
    """Match detections (already in score order) to ground truth.

    Returns ``(labels, matched_gt)`` where labels are 1 (TP), 0 (FP) or -1
    (absorbed by an ignore region) and matched_gt holds the GT index or -1.
    """
    n = len(det_boxes)
    m = len(gt_boxes)
    ious = iou_matrix(det_boxes, gt_boxes)
    ignore = [bool(x) for x in np.asarray(gt_ignore, dtype=bool).tolist()]
    taken = [False] * m
    labels = np.zeros(n, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    for d in range(n):
        best, best_iou = -1, -1.0
        for g in range(m):
            if ignore[g] or taken[g]:
                continue
            v = ious[d, g]
            if v >= thr and v > best_iou:
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
            labels[d] = 1
            matched[d] = best
            continue
        for g in range(m):
            if ignore[g] and ious[d, g] >= thr:
                labels[d] = -1
                matched[d] = g
                break
    return labels, matched


def nms(boxes, scores, thr):
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(scores.shape[0]), -scores)).tolist()
    ious = iou_matrix(boxes, boxes)
    suppressed = [False] * scores.shape[0]
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order:
            if not suppressed[j] and j != i and ious[i, j] > thr:
                suppressed[j] = True
    return np.asarray(keep, dtype=np.int64)
