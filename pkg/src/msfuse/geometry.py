"""Boxes, modalities and detections shared by every stage of the fusion pipeline."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence


class InvalidBoxError(ValueError):
    """A box with non-finite coordinates or non-positive area."""


class Modality(str, enum.Enum):
    RGB = "RGB"
    THERMAL = "Thermal"

    @property
    def opposite(self) -> "Modality":
        return Modality.THERMAL if self is Modality.RGB else Modality.RGB

    @classmethod
    def parse(cls, value: "str | Modality") -> "Modality":
        if isinstance(value, Modality):
            return value
        key = str(value).strip().lower()
        if key in ("rgb", "visible"):
            return cls.RGB
        if key in ("thermal", "t", "ir", "lwir"):
            return cls.THERMAL
        raise ValueError(f"unknown modality {value!r}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in corner format ``[x1, y1, x2, y2]`` (pixels)."""

    x1: float
    y1: float
    x2: float
    y2: float

    @classmethod
    def from_list(cls, coords: Sequence[float]) -> "Box":
        if len(coords) != 4:
            raise InvalidBoxError(f"expected 4 coordinates, got {len(coords)}")
        return cls(*(float(c) for c in coords))

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def violations(self) -> list[str]:
        out = []
        coords = self.to_list()
        if not all(math.isfinite(c) for c in coords):
            out.append("non-finite coordinate")
            return out
        if self.x2 <= self.x1:
            out.append("zero width" if self.x2 == self.x1 else "negative width")
        if self.y2 <= self.y1:
            out.append("zero height" if self.y2 == self.y1 else "negative height")
        return out

    def is_valid(self) -> bool:
        return not self.violations()

    def check(self) -> "Box":
        problems = self.violations()
        if problems:
            raise InvalidBoxError(f"invalid box {self.to_list()}: {', '.join(problems)}")
        return self

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


@dataclass(frozen=True)
class Detection:
    box: Box
    score: float
    modality: Modality
    class_label: str = "person"
    image_id: str = ""

    def with_modality(self, modality: Modality) -> "Detection":
        """Same box, score, label and image, re-tagged to ``modality``."""
        return Detection(self.box, self.score, modality, self.class_label, self.image_id)


def iou_raw(ax1: float, ay1: float, ax2: float, ay2: float,
            bx1: float, by1: float, bx2: float, by2: float) -> float:
    # Operation order is mirrored by both kernel backends; keep them in sync.
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two valid boxes."""
    a.check()
    b.check()
    return iou_raw(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2)


def validate_detection(d: Detection) -> list[str]:
    """Return every violated detection invariant; an empty list means valid."""
    problems = list(d.box.violations())
    score = d.score
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        problems.append("score is not a number")
    elif not math.isfinite(score):
        problems.append("score is not finite")
    elif not 0.0 <= score <= 1.0:
        problems.append("score out of range")
    if not isinstance(d.modality, Modality):
        problems.append("unknown modality")
    return problems


def check_detection(d: Detection) -> Detection:
    problems = validate_detection(d)
    if problems:
        raise ValueError(f"invalid detection: {', '.join(problems)}")
    return d


def boxes_to_array(boxes: Sequence[Box]):
    import numpy as np

    arr = np.empty((len(boxes), 4), dtype=np.float64)
    for i, b in enumerate(boxes):
        arr[i] = (b.x1, b.y1, b.x2, b.y2)
    return arr
