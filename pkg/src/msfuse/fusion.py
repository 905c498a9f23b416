"""Score and box fusion for the vision branch, the language branch and their combination.

Score strategies: ``Avg`` (mean of the two scores) and ``Max``.
Box strategies: ``SAvg`` (score-weighted coordinate average) and ``Argmax``
(box of the higher score). The default configuration is Max for the
vision-driven score, Avg for the vision-language score and SAvg everywhere
for boxes.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import kernels
from .geometry import Box, boxes_to_array
from .language.branch import MSCoTScores
from .pairing import PairedDetection, Provenance


class ScoreFusionStrategy(str, enum.Enum):
    AVG = "Avg"
    MAX = "Max"

    @classmethod
    def parse(cls, v) -> "ScoreFusionStrategy":
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        if key == "nms":
            return cls.MAX
        raise ValueError(f"unknown score fusion strategy {v!r}")


class BoxFusionStrategy(str, enum.Enum):
    SAVG = "SAvg"
    ARGMAX = "Argmax"

    @classmethod
    def parse(cls, v) -> "BoxFusionStrategy":
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower().replace("-", "").replace("_", "")
        if key == "savg":
            return cls.SAVG
        if key in ("argmax", "max", "nms"):
            return cls.ARGMAX
        raise ValueError(f"unknown box fusion strategy {v!r}")


@dataclass(frozen=True)
class FusionConfig:
    score_v: ScoreFusionStrategy = ScoreFusionStrategy.MAX
    score_vl: ScoreFusionStrategy = ScoreFusionStrategy.AVG
    box_v: BoxFusionStrategy = BoxFusionStrategy.SAVG
    box_l: BoxFusionStrategy = BoxFusionStrategy.SAVG
    box_vl: BoxFusionStrategy = BoxFusionStrategy.SAVG

    def __post_init__(self):
        for name in ("score_v", "score_vl"):
            object.__setattr__(self, name, ScoreFusionStrategy.parse(getattr(self, name)))
        for name in ("box_v", "box_l", "box_vl"):
            object.__setattr__(self, name, BoxFusionStrategy.parse(getattr(self, name)))

    @classmethod
    def from_dict(cls, d: dict | None) -> "FusionConfig":
        d = dict(d or {})
        unknown = set(d) - {"score_v", "score_vl", "box_v", "box_l", "box_vl"}
        if unknown:
            raise ValueError(f"unknown fusion keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).value for k in ("score_v", "score_vl", "box_v", "box_l", "box_vl")}

    @property
    def label(self) -> str:
        return (f"score V={self.score_v.value} VL={self.score_vl.value} | "
                f"box V={self.box_v.value} L={self.box_l.value} VL={self.box_vl.value}")


def score_grid() -> list[FusionConfig]:
    """The four (vision, vision-language) score combinations, default boxes."""
    A, M = ScoreFusionStrategy.AVG, ScoreFusionStrategy.MAX
    return [FusionConfig(score_v=v, score_vl=vl) for v, vl in ((A, A), (A, M), (M, M), (M, A))]


def box_grid() -> list[FusionConfig]:
    """All eight (V, L, VL) box strategy triples, default scores; V varies fastest."""
    opts = (BoxFusionStrategy.ARGMAX, BoxFusionStrategy.SAVG)
    return [FusionConfig(box_v=v, box_l=l, box_vl=vl)
            for vl, l, v in itertools.product(opts, opts, opts)]


def _check_score(s: float) -> float:
    if not (isinstance(s, (int, float)) and math.isfinite(s) and 0.0 <= s <= 1.0):
        raise ValueError(f"score {s!r} outside [0, 1]")
    return float(s)


def score_fuse(s1: float, s2: float, strategy: ScoreFusionStrategy) -> float:
    s1, s2 = _check_score(s1), _check_score(s2)
    if strategy is ScoreFusionStrategy.AVG:
        return (s1 + s2) / 2.0
    return max(s1, s2)


def _wavg(c1: float, s1: float, c2: float, s2: float) -> float:
    v = (c1 * s1 + c2 * s2) / (s1 + s2)
    # rounding must not push the result outside the two inputs
    return min(max(v, min(c1, c2)), max(c1, c2))


def box_fuse(b1: Box, s1: float, b2: Box, s2: float, strategy: BoxFusionStrategy) -> Box:
    """Fuse two boxes. With both weights zero, SAvg gives the plain midpoint and Argmax ``b1``."""
    b1.check()
    b2.check()
    s1, s2 = _check_score(s1), _check_score(s2)
    if strategy is BoxFusionStrategy.ARGMAX:
        return b1 if s1 >= s2 else b2
    if s1 + s2 == 0.0:
        s1 = s2 = 1.0
    return Box(*(_wavg(c1, s1, c2, s2) for c1, c2 in zip(b1.to_list(), b2.to_list())))


@dataclass(frozen=True)
class FusionTrace:
    s_f_v: float
    b_f_v: Box
    s_f_l: Optional[float]
    b_f_l: Optional[Box]
    s_rgb_l: Optional[float]
    s_t_l: Optional[float]
    provenance: Provenance
    fallback: bool = False
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "s_f_v": self.s_f_v,
            "b_f_v": self.b_f_v.to_list(),
            "s_f_l": self.s_f_l,
            "b_f_l": None if self.b_f_l is None else self.b_f_l.to_list(),
            "s_rgb_l": self.s_rgb_l,
            "s_t_l": self.s_t_l,
            "provenance": self.provenance.value,
            "fallback": self.fallback,
            "degenerate": list(self.degenerate),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionTrace":
        return cls(
            s_f_v=float(d["s_f_v"]),
            b_f_v=Box.from_list(d["b_f_v"]),
            s_f_l=None if d.get("s_f_l") is None else float(d["s_f_l"]),
            b_f_l=None if d.get("b_f_l") is None else Box.from_list(d["b_f_l"]),
            s_rgb_l=None if d.get("s_rgb_l") is None else float(d["s_rgb_l"]),
            s_t_l=None if d.get("s_t_l") is None else float(d["s_t_l"]),
            provenance=Provenance(d["provenance"]),
            fallback=bool(d.get("fallback", False)),
            degenerate=tuple(d.get("degenerate", ())),
        )


@dataclass(frozen=True)
class FusedDetection:
    score: float
    box: Box
    trace: FusionTrace
    image_id: str = ""
    class_label: str = "person"


def vision_driven(pair: PairedDetection, cfg: FusionConfig = FusionConfig()) -> tuple[float, Box]:
    r, t = pair.rgb, pair.thermal
    return (score_fuse(r.score, t.score, cfg.score_v),
            box_fuse(r.box, r.score, t.box, t.score, cfg.box_v))


def language_driven(pair: PairedDetection, lang: MSCoTScores,
                    cfg: FusionConfig = FusionConfig()) -> tuple[float, Box]:
    """Vision-branch boxes weighted by the language-branch single-modal scores."""
    box = box_fuse(pair.rgb.box, lang.s_rgb_l, pair.thermal.box, lang.s_t_l, cfg.box_l)
    return _check_score(lang.s_f_l), box


def vl_fuse(pair: PairedDetection, lang: MSCoTScores | None,
            cfg: FusionConfig = FusionConfig()) -> FusedDetection:
    s_v, b_v = vision_driven(pair, cfg)
    degenerate = []
    if pair.rgb.score + pair.thermal.score == 0.0 and cfg.box_v is BoxFusionStrategy.SAVG:
        degenerate.append("V")
    if lang is None:
        trace = FusionTrace(s_v, b_v, None, None, None, None, pair.provenance,
                            fallback=True, degenerate=tuple(degenerate))
        return FusedDetection(s_v, b_v, trace, pair.image_id)
    s_l, b_l = language_driven(pair, lang, cfg)
    if lang.s_rgb_l + lang.s_t_l == 0.0 and cfg.box_l is BoxFusionStrategy.SAVG:
        degenerate.append("L")
    if s_v + s_l == 0.0 and cfg.box_vl is BoxFusionStrategy.SAVG:
        degenerate.append("VL")
    score = score_fuse(s_v, s_l, cfg.score_vl)
    box = box_fuse(b_v, s_v, b_l, s_l, cfg.box_vl)
    trace = FusionTrace(s_v, b_v, s_l, b_l, lang.s_rgb_l, lang.s_t_l, pair.provenance,
                        degenerate=tuple(degenerate))
    return FusedDetection(score, box, trace, pair.image_id)


def post_nms(dets: Sequence[FusedDetection], iou_thr: float = 0.5) -> list[FusedDetection]:
    """Optional cross-pair suppression of duplicates; survivors keep their input order."""
    if len(dets) < 2:
        return list(dets)
    keep = kernels.nms(boxes_to_array([d.box for d in dets]), [d.score for d in dets], iou_thr)
    return [dets[i] for i in sorted(keep.tolist())]


def fuse_image(pairs: Sequence[PairedDetection], lang: Sequence[MSCoTScores | None],
               cfg: FusionConfig = FusionConfig(), nms_iou: float | None = None) -> list[FusedDetection]:
    if len(pairs) != len(lang):
        raise ValueError(f"{len(pairs)} pairs but {len(lang)} language results")
    for i, s in enumerate(lang):
        if s is not None and s.pair_index != i:
            raise ValueError(f"language result at position {i} belongs to pair {s.pair_index}")
    out = [vl_fuse(p, s, cfg) for p, s in zip(pairs, lang)]
    if nms_iou is not None:
        out = post_nms(out, nms_iou)
    return out
