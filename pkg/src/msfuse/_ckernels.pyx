# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Same contracts and tie-breaks as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    SRC_RGB = 0
    SRC_THERMAL = 1


cdef inline double _iou(const double[:, ::1] a, Py_ssize_t i,
                        const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
    cdef double ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
    cdef double inter, union
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1]) + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
    return inter / union


cdef inline double min(double x, double y) noexcept nogil:
    return x if x < y else y


cdef inline double max(double x, double y) noexcept nogil:
    return x if x > y else y


def _as_boxes(x):
    return np.ascontiguousarray(x, dtype=np.float64).reshape(-1, 4)


def iou_matrix(a, b):
    cdef const double[:, ::1] av = _as_boxes(a)
    cdef const double[:, ::1] bv = _as_boxes(b)
    cdef Py_ssize_t n = av.shape[0], m = bv.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(n):
            for j in range(m):
                ov[i, j] = _iou(av, i, bv, j)
    return out


def consumption_order(scores_rgb, scores_t):
    scores = np.concatenate([np.asarray(scores_rgb, dtype=np.float64),
                             np.asarray(scores_t, dtype=np.float64)])
    n_rgb = len(scores_rgb)
    mod = np.zeros(scores.shape[0], dtype=np.int64)
    mod[n_rgb:] = 1
    idx = np.arange(scores.shape[0], dtype=np.int64)
    idx[n_rgb:] -= n_rgb
    return np.lexsort((idx, mod, -scores)).astype(np.int64)


def dpair_indices(boxes_rgb, scores_rgb, boxes_t, scores_t, double tau):
    cdef Py_ssize_t n_rgb = len(scores_rgb), n_t = len(scores_t)
    cdef const double[:, ::1] ious = iou_matrix(boxes_rgb, boxes_t)
    cdef const cnp.int64_t[::1] order = consumption_order(scores_rgb, scores_t)
    used_rgb_arr = np.zeros(n_rgb, dtype=np.uint8)
    used_t_arr = np.zeros(n_t, dtype=np.uint8)
    rows_arr = np.empty((n_rgb + n_t, 3), dtype=np.int64)
    cdef cnp.uint8_t[::1] used_rgb = used_rgb_arr
    cdef cnp.uint8_t[::1] used_t = used_t_arr
    cdef cnp.int64_t[:, ::1] rows = rows_arr
    cdef Py_ssize_t r = 0, p, k, i, j, best
    cdef double best_iou
    with nogil:
        for p in range(n_rgb + n_t):
            k = order[p]
            if k < n_rgb:
                i = k
                if used_rgb[i]:
                    continue
                used_rgb[i] = 1
                best = -1
                best_iou = tau
                for j in range(n_t):
                    if not used_t[j] and ious[i, j] > best_iou:
                        best = j
                        best_iou = ious[i, j]
                if best >= 0:
                    used_t[best] = 1
                rows[r, 0] = SRC_RGB
                rows[r, 1] = i
                rows[r, 2] = best
            else:
                j = k - n_rgb
                if used_t[j]:
                    continue
                used_t[j] = 1
                best = -1
                best_iou = tau
                for i in range(n_rgb):
                    if not used_rgb[i] and ious[i, j] > best_iou:
                        best = i
                        best_iou = ious[i, j]
                if best >= 0:
                    used_rgb[best] = 1
                rows[r, 0] = SRC_THERMAL
                rows[r, 1] = j
                rows[r, 2] = best
            r += 1
    return rows_arr[:r].copy()


def greedy_match(det_boxes, gt_boxes, gt_ignore, double thr):
    cdef const double[:, ::1] ious = iou_matrix(det_boxes, gt_boxes)
    cdef Py_ssize_t n = ious.shape[0], m = ious.shape[1], d, g, best
    ign_arr = np.ascontiguousarray(np.asarray(gt_ignore, dtype=bool).reshape(-1), dtype=np.uint8)
    cdef const cnp.uint8_t[::1] ignore = ign_arr
    taken_arr = np.zeros(m, dtype=np.uint8)
    cdef cnp.uint8_t[::1] taken = taken_arr
    labels_arr = np.zeros(n, dtype=np.int8)
    matched_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int8_t[::1] labels = labels_arr
    cdef cnp.int64_t[::1] matched = matched_arr
    cdef double v, best_iou
    with nogil:
        for d in range(n):
            best = -1
            best_iou = -1.0
            for g in range(m):
                if ignore[g] or taken[g]:
                    continue
                v = ious[d, g]
                if v >= thr and v > best_iou:
                    best = g
                    best_iou = v
            if best >= 0:
                taken[best] = 1
                labels[d] = 1
                matched[d] = best
                continue
            for g in range(m):
                if ignore[g] and ious[d, g] >= thr:
                    labels[d] = -1
                    matched[d] = g
                    break
    return labels_arr, matched_arr


def nms(boxes, scores, double thr):
    scores = np.asarray(scores, dtype=np.float64)
    cdef const cnp.int64_t[::1] order = np.lexsort(
        (np.arange(scores.shape[0]), -scores)).astype(np.int64)
    cdef const double[:, ::1] ious = iou_matrix(boxes, boxes)
    cdef Py_ssize_t n = order.shape[0], a, b, i, j, nk = 0
    sup_arr = np.zeros(n, dtype=np.uint8)
    keep_arr = np.empty(n, dtype=np.int64)
    cdef cnp.uint8_t[::1] sup = sup_arr
    cdef cnp.int64_t[::1] keep = keep_arr
    with nogil:
        for a in range(n):
            i = order[a]
            if sup[i]:
                continue
            keep[nk] = i
            nk += 1
            for b in range(n):
                j = order[b]
                if not sup[j] and j != i and ious[i, j] > thr:
                    sup[j] = 1
    return keep_arr[:nk].copy()
