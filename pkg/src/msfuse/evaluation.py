"""Detection evaluation: greedy IoU matching, all-point AP and log-average miss rate
over FPPI in [1e-2, 1e0], with Day / Night / All slices."""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .geometry import Box, boxes_to_array

MR_REF_POINTS = np.logspace(-2.0, 0.0, 9)
MR_FLOOR = 1e-10

TP, FP, IGNORED = 1, 0, -1


class Condition(str, enum.Enum):
    DAY = "Day"
    NIGHT = "Night"
    UNKNOWN = "Unknown"

    @classmethod
    def parse(cls, v) -> "Condition":
        if isinstance(v, cls):
            return v
        if v is None:
            return cls.UNKNOWN
        key = str(v).strip().lower()
        for c in cls:
            if c.value.lower() == key:
                return c
        raise ValueError(f"unknown condition {v!r}")


class Slice(str, enum.Enum):
    DAY = "Day"
    NIGHT = "Night"
    ALL = "All"


@dataclass(frozen=True)
class GroundTruthBox:
    box: Box
    image_id: str
    condition: Condition = Condition.UNKNOWN
    ignore: bool = False


@dataclass(frozen=True)
class ScoredDetection:
    """Minimal evaluation input; FusedDetection and Detection both satisfy it."""

    box: Box
    score: float
    image_id: str


@dataclass
class MatchResult:
    """Per-detection labels for one image, aligned with the input order."""

    scores: np.ndarray
    labels: np.ndarray  # TP / FP / IGNORED
    n_gt: int  # non-ignore ground truths

    @property
    def tp(self) -> int:
        return int(np.count_nonzero(self.labels == TP))

    @property
    def fp(self) -> int:
        return int(np.count_nonzero(self.labels == FP))

    @property
    def fn(self) -> int:
        return self.n_gt - self.tp


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float
    fppi: float
    miss_rate: float


@dataclass
class EvalReport:
    ap_all: float
    mr_all: Optional[float]
    mr_day: Optional[float] = None
    mr_night: Optional[float] = None
    counts: dict = field(default_factory=dict)
    curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ap_all": self.ap_all,
            "mr_day": self.mr_day,
            "mr_night": self.mr_night,
            "mr_all": self.mr_all,
            "counts": self.counts,
            "curve": [p.__dict__ for p in self.curve],
        }


def _sort_order(scores: np.ndarray) -> np.ndarray:
    return np.lexsort((np.arange(scores.shape[0]), -scores))


def match_detections(dets: Sequence, gts: Sequence[GroundTruthBox], iou_thr: float = 0.5) -> MatchResult:
    """Greedy one-to-one matching for a single image.

    Detections are visited by descending score; each takes the unmatched
    non-ignore GT of highest IoU (at least ``iou_thr``). A detection that
    only overlaps ignore regions is labelled IGNORED and counts nowhere.
    """
    if not 0.0 < iou_thr < 1.0:
        raise ValueError("iou_thr must lie in (0, 1)")
    ids = {d.image_id for d in dets} | {g.image_id for g in gts}
    if len(ids) > 1:
        raise ValueError(f"match_detections works per image; got {sorted(ids)}")
    scores = np.asarray([float(d.score) for d in dets], dtype=np.float64)
    order = _sort_order(scores)
    labels_sorted, _ = kernels.greedy_match(
        boxes_to_array([dets[i].box for i in order]),
        boxes_to_array([g.box for g in gts]),
        np.asarray([g.ignore for g in gts], dtype=bool),
        float(iou_thr),
    )
    labels = np.empty(len(dets), dtype=np.int8)
    labels[order] = labels_sorted
    return MatchResult(scores, labels, sum(1 for g in gts if not g.ignore))


def _ranked(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Labels of counted detections (TP/FP) in descending score order."""
    keep = labels != IGNORED
    scores, labels = scores[keep], labels[keep]
    return labels[_sort_order(scores)]


def _cumulative(scores, labels):
    ranked = _ranked(np.asarray(scores, dtype=np.float64), np.asarray(labels))
    tp = np.cumsum(ranked == TP)
    fp = np.cumsum(ranked == FP)
    return tp, fp


def average_precision(scores: Sequence[float], labels: Sequence[int], total_gt: int) -> float:
    """All-point interpolated AP from score-ranked TP/FP labels."""
    tp, fp = _cumulative(scores, labels)
    if total_gt == 0:
        return 1.0 if tp.size == 0 else 0.0
    if tp.size == 0:
        return 0.0
    recall = tp / total_gt
    precision = tp / (tp + fp)
    # monotone envelope, right to left
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * envelope))


def miss_rate_samples(scores: Sequence[float], labels: Sequence[int], total_gt: int,
                      num_images: int) -> np.ndarray:
    if num_images < 1:
        raise ValueError("num_images must be >= 1")
    tp, fp = _cumulative(scores, labels)
    if total_gt == 0:
        return np.zeros(MR_REF_POINTS.shape[0])
    # include the empty cutoff: fppi 0, miss rate 1
    fppi = np.concatenate(([0.0], fp / num_images))
    miss = np.concatenate(([1.0], 1.0 - tp / total_gt))
    # curve points are sorted by fppi; take the last one at or below each reference
    idx = np.searchsorted(fppi, MR_REF_POINTS, side="right") - 1
    return miss[idx]


def log_average_miss_rate(scores: Sequence[float], labels: Sequence[int], total_gt: int,
                          num_images: int) -> float:
    samples = miss_rate_samples(scores, labels, total_gt, num_images)
    if np.all(samples == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(np.maximum(samples, MR_FLOOR)))))


def pr_curve(scores, labels, total_gt: int, num_images: int) -> list[PRPoint]:
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels)
    keep = lab != IGNORED
    s, lab = s[keep], lab[keep]
    order = _sort_order(s)
    s, lab = s[order], lab[order]
    tp = np.cumsum(lab == TP)
    fp = np.cumsum(lab == FP)
    out = []
    for k in range(s.shape[0]):
        recall = float(tp[k] / total_gt) if total_gt else 0.0
        out.append(PRPoint(float(s[k]), float(tp[k] / (k + 1)), recall,
                           float(fp[k] / max(num_images, 1)), 1.0 - recall if total_gt else 0.0))
    return out


def match_all(dets: Iterable, gts: Iterable[GroundTruthBox], iou_thr: float = 0.5) -> dict[str, MatchResult]:
    """Per-image matching over a whole dataset."""
    by_det = defaultdict(list)
    by_gt = defaultdict(list)
    for d in dets:
        by_det[d.image_id].append(d)
    for g in gts:
        by_gt[g.image_id].append(g)
    return {img: match_detections(by_det.get(img, []), by_gt.get(img, []), iou_thr)
            for img in sorted(set(by_det) | set(by_gt))}


def _concat(results: Sequence[MatchResult]):
    if not results:
        return np.zeros(0), np.zeros(0, dtype=np.int8), 0
    return (np.concatenate([r.scores for r in results]),
            np.concatenate([r.labels for r in results]),
            sum(r.n_gt for r in results))


def evaluate(dets: Iterable, gts: Sequence[GroundTruthBox],
             image_conditions: Mapping[str, Condition | str] | None = None,
             slices: Sequence[Slice | str] = (Slice.DAY, Slice.NIGHT, Slice.ALL),
             iou_thr: float = 0.5) -> EvalReport:
    """AP on All plus log-average MR per requested slice.

    Image conditions come from ``image_conditions`` when given, else from the
    ground truth boxes. A requested slice with no images is reported as None.
    """
    dets = list(dets)
    conds: dict[str, Condition] = {}
    for g in gts:
        conds.setdefault(g.image_id, Condition.parse(g.condition))
    if image_conditions is not None:
        for k, v in image_conditions.items():
            conds[k] = Condition.parse(v)
    for d in dets:
        conds.setdefault(d.image_id, Condition.UNKNOWN)
    results = match_all(dets, gts, iou_thr)
    for img in conds:
        results.setdefault(img, MatchResult(np.zeros(0), np.zeros(0, dtype=np.int8), 0))

    wanted = [Slice(s) if not isinstance(s, Slice) else s for s in slices]
    members = {
        Slice.ALL: sorted(conds),
        Slice.DAY: sorted(i for i, c in conds.items() if c is Condition.DAY),
        Slice.NIGHT: sorted(i for i, c in conds.items() if c is Condition.NIGHT),
    }
    mr: dict[Slice, Optional[float]] = {}
    counts = {}
    for sl in set(wanted) | {Slice.ALL}:
        imgs = members[sl]
        if not imgs:
            mr[sl] = None
            continue
        rs = [results[i] for i in imgs]
        scores, labels, n_gt = _concat(rs)
        mr[sl] = log_average_miss_rate(scores, labels, n_gt, len(imgs))
        tp = sum(r.tp for r in rs)
        counts[sl.value] = {"images": len(imgs), "tp": tp, "fp": sum(r.fp for r in rs), "fn": n_gt - tp}

    scores, labels, n_gt = _concat([results[i] for i in members[Slice.ALL]])
    n_img = max(len(members[Slice.ALL]), 1)
    return EvalReport(
        ap_all=average_precision(scores, labels, n_gt),
        mr_all=mr[Slice.ALL],
        mr_day=mr.get(Slice.DAY) if Slice.DAY in wanted else None,
        mr_night=mr.get(Slice.NIGHT) if Slice.NIGHT in wanted else None,
        counts=counts,
        curve=pr_curve(scores, labels, n_gt, n_img),
    )


def format_table(rows: Sequence[tuple[str, EvalReport]], percent: bool = True) -> str:
    """Fixed-width table: AP (All), MR (Day / Night / All). Lower MR is better."""
    scale = 100.0 if percent else 1.0

    def cell(v):
        return f"{'-':>8}" if v is None else f"{v * scale:8.2f}"

    name_w = max([len("config")] + [len(n) for n, _ in rows])
    head = f"{'config':<{name_w}} | {'AP All':>8} | {'MR Day':>8} {'MR Night':>8} {'MR All':>8}"
    lines = [head, "-" * len(head)]
    for name, r in rows:
        lines.append(f"{name:<{name_w}} | {cell(r.ap_all)} | {cell(r.mr_day)} {cell(r.mr_night)} {cell(r.mr_all)}")
    return "\n".join(lines)
