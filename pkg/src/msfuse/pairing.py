"""Greedy cross-modality detection pairing.

Detections from both modalities go into one pool. The highest-scoring
unconsumed detection takes the unconsumed opposite-modality detection with
the highest IoU above ``tau`` as its partner; when there is none, the
detection is paired with a copy of itself in the opposite slot. Both are
removed and the loop repeats until the pool is empty.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from . import kernels
from .geometry import Detection, Modality, boxes_to_array, check_detection


class PairingError(ValueError):
    pass


class Provenance(str, enum.Enum):
    MATCHED = "Matched"
    OVERRIDE_FROM_RGB = "OverrideFromRGB"
    OVERRIDE_FROM_THERMAL = "OverrideFromThermal"


@dataclass(frozen=True)
class PairingConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


@dataclass(frozen=True)
class PairedDetection:
    rgb: Detection
    thermal: Detection
    provenance: Provenance

    @property
    def image_id(self) -> str:
        return self.rgb.image_id

    @property
    def is_override(self) -> bool:
        return self.provenance is not Provenance.MATCHED

    def side(self, modality: Modality) -> Detection:
        return self.rgb if modality is Modality.RGB else self.thermal


def _check_inputs(dets_rgb: Sequence[Detection], dets_t: Sequence[Detection]) -> None:
    for role, dets in ((Modality.RGB, dets_rgb), (Modality.THERMAL, dets_t)):
        for i, d in enumerate(dets):
            if d.modality is not role:
                raise PairingError(f"{role.value} list entry {i} has modality {d.modality.value}")
            check_detection(d)
    ids = {d.image_id for d in dets_rgb} | {d.image_id for d in dets_t}
    if len(ids) > 1:
        raise PairingError(f"detections span several images: {sorted(ids)}")


def dpair(dets_rgb: Sequence[Detection], dets_t: Sequence[Detection],
          cfg: PairingConfig = PairingConfig()) -> list[PairedDetection]:
    """Pair one image's RGB and thermal detections.

    Output follows consumption order (descending score of the pair's
    initiating detection). Ties on score prefer RGB, then lower input index;
    ties on IoU prefer the lower input index.
    """
    _check_inputs(dets_rgb, dets_t)
    if not dets_rgb and not dets_t:
        return []
    rows = kernels.dpair_indices(
        boxes_to_array([d.box for d in dets_rgb]),
        [float(d.score) for d in dets_rgb],
        boxes_to_array([d.box for d in dets_t]),
        [float(d.score) for d in dets_t],
        float(cfg.tau),
    )
    pairs = []
    for src, idx, partner in rows.tolist():
        if src == kernels.SRC_RGB:
            rgb = dets_rgb[idx]
            if partner >= 0:
                pairs.append(PairedDetection(rgb, dets_t[partner], Provenance.MATCHED))
            else:
                pairs.append(PairedDetection(rgb, rgb.with_modality(Modality.THERMAL),
                                             Provenance.OVERRIDE_FROM_RGB))
        else:
            th = dets_t[idx]
            if partner >= 0:
                pairs.append(PairedDetection(dets_rgb[partner], th, Provenance.MATCHED))
            else:
                pairs.append(PairedDetection(th.with_modality(Modality.RGB), th,
                                             Provenance.OVERRIDE_FROM_THERMAL))
    return pairs
