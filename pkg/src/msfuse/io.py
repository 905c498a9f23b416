"""JSON file formats: detection files, ground truth, pipeline stage files, fused output.

All writers emit canonical JSON (sorted keys, one-space indent, trailing
newline). Floats are written with ``repr`` precision, so save -> load is exact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .evaluation import Condition, GroundTruthBox
from .fusion import FusedDetection, FusionTrace
from .geometry import Box, Detection, Modality, validate_detection
from .language.branch import MSCoTScores
from .pairing import PairedDetection, Provenance

SCHEMA_VERSION = "1.0"


class SchemaError(ValueError):
    def __init__(self, path, message: str, index: int | None = None, field_name: str | None = None):
        where = str(path)
        if index is not None:
            where += f": entry {index}"
        if field_name:
            where += f", field {field_name!r}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.index = index
        self.field = field_name


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    path_rgb: str
    path_thermal: str
    condition: Condition = Condition.UNKNOWN

    def to_dict(self) -> dict:
        return {"image_id": self.image_id, "path_rgb": self.path_rgb,
                "path_thermal": self.path_thermal, "condition": self.condition.value}


@dataclass
class DetectionSet:
    modality: Modality
    detections: list[Detection]
    manifest: list[ImageRecord] = field(default_factory=list)

    def by_image(self) -> dict[str, list[Detection]]:
        out: dict[str, list[Detection]] = {r.image_id: [] for r in self.manifest}
        for d in self.detections:
            out.setdefault(d.image_id, []).append(d)
        return out


def canonical_dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(canonical_dumps(obj), encoding="utf-8")


def read_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(path, f"not valid JSON ({exc})") from None


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(path, obj: dict, key: str, kind, index=None):
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(path, "missing field", index, key)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, f"expected a number, got {value!r}", index, key)
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(path, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}", index, key)
    return value


def _box(path, raw, index, key="box") -> Box:
    if not isinstance(raw, list) or len(raw) != 4 or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
        raise SchemaError(path, f"expected [x1, y1, x2, y2], got {raw!r}", index, key)
    return Box.from_list(raw)


def _check_version(path, doc) -> None:
    if not isinstance(doc, dict):
        raise SchemaError(path, "top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(path, f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})")


def _manifest(path, raw) -> list[ImageRecord]:
    if not isinstance(raw, list):
        raise SchemaError(path, "image_manifest must be a list")
    out = []
    seen = set()
    for i, m in enumerate(raw):
        image_id = _require(path, m, "image_id", str, i)
        if image_id in seen:
            raise SchemaError(path, f"duplicate image_id {image_id!r}", i, "image_id")
        seen.add(image_id)
        try:
            cond = Condition.parse(m.get("condition", "Unknown"))
        except ValueError as exc:
            raise SchemaError(path, str(exc), i, "condition") from None
        out.append(ImageRecord(image_id, _require(path, m, "path_rgb", str, i),
                               _require(path, m, "path_thermal", str, i), cond))
    return out


def load_detections(path: str | Path) -> DetectionSet:
    doc = read_json(path)
    _check_version(path, doc)
    try:
        modality = Modality.parse(_require(path, doc, "modality", str))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(path, str(exc), None, "modality") from None
    manifest = _manifest(path, doc.get("image_manifest", []))
    known = {r.image_id for r in manifest}
    entries = _require(path, doc, "entries", list)
    dets = []
    for i, e in enumerate(entries):
        image_id = _require(path, e, "image_id", str, i)
        if image_id not in known:
            raise SchemaError(path, f"image_id {image_id!r} not in image_manifest", i, "image_id")
        det = Detection(
            box=_box(path, e.get("box"), i),
            score=_require(path, e, "score", float, i),
            modality=modality,
            class_label=str(e.get("class_label", "person")),
            image_id=image_id,
        )
        problems = validate_detection(det)
        if problems:
            field_name = "score" if any("score" in p for p in problems) else "box"
            raise SchemaError(path, "; ".join(problems), i, field_name)
        dets.append(det)
    return DetectionSet(modality, dets, manifest)


def detections_doc(modality: Modality, dets: Iterable[Detection], manifest: Sequence[ImageRecord]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "modality": modality.value,
        "image_manifest": [r.to_dict() for r in manifest],
        "entries": [{"image_id": d.image_id, "box": d.box.to_list(), "score": d.score,
                     "class_label": d.class_label} for d in dets],
    }


def save_detections(path, modality: Modality, dets: Iterable[Detection], manifest: Sequence[ImageRecord]) -> None:
    write_json(path, detections_doc(modality, dets, manifest))


def fused_to_dict(d: FusedDetection) -> dict:
    return {"image_id": d.image_id, "box": d.box.to_list(), "score": d.score,
            "class_label": d.class_label, "trace": d.trace.to_dict()}


def fused_doc(dets: Iterable[FusedDetection]) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": "fused",
            "detections": [fused_to_dict(d) for d in dets]}


def save_fused(path, dets: Iterable[FusedDetection]) -> None:
    write_json(path, fused_doc(dets))


def load_fused(path) -> list[FusedDetection]:
    doc = read_json(path)
    _check_version(path, doc)
    out = []
    for i, e in enumerate(_require(path, doc, "detections", list)):
        score = _require(path, e, "score", float, i)
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise SchemaError(path, "score out of range", i, "score")
        try:
            trace = FusionTrace.from_dict(_require(path, e, "trace", dict, i))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(path, f"bad trace ({exc})", i, "trace") from None
        out.append(FusedDetection(score, _box(path, e.get("box"), i).check(), trace,
                                  _require(path, e, "image_id", str, i), str(e.get("class_label", "person"))))
    return out


def load_ground_truth(path) -> tuple[list[GroundTruthBox], dict[str, Condition]]:
    """Ground truth: ``{"images": [{image_id, condition}], "annotations": [{image_id, box, ignore}]}``."""
    doc = read_json(path)
    _check_version(path, doc)
    conditions: dict[str, Condition] = {}
    for i, m in enumerate(doc.get("images", [])):
        try:
            conditions[_require(path, m, "image_id", str, i)] = Condition.parse(m.get("condition", "Unknown"))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(path, str(exc), i, "condition") from None
    gts = []
    for i, a in enumerate(_require(path, doc, "annotations", list)):
        image_id = _require(path, a, "image_id", str, i)
        box = _box(path, a.get("box"), i)
        if not box.is_valid():
            raise SchemaError(path, "; ".join(box.violations()), i, "box")
        gts.append(GroundTruthBox(box, image_id, conditions.get(image_id, Condition.UNKNOWN),
                                  bool(a.get("ignore", False))))
    return gts, conditions


def save_ground_truth(path, gts: Iterable[GroundTruthBox], conditions: dict[str, Condition]) -> None:
    write_json(path, {
        "schema_version": SCHEMA_VERSION,
        "images": [{"image_id": k, "condition": v.value} for k, v in conditions.items()],
        "annotations": [{"image_id": g.image_id, "box": g.box.to_list(), "ignore": g.ignore} for g in gts],
    })


# stage files carry per-image pairs, then descriptions, then MSCoT scores


def _det_dict(d: Detection) -> dict:
    return {"box": d.box.to_list(), "score": d.score, "class_label": d.class_label, "modality": d.modality.value}


def pair_to_dict(p: PairedDetection) -> dict:
    return {"provenance": p.provenance.value, "rgb": _det_dict(p.rgb), "thermal": _det_dict(p.thermal)}


def pair_from_dict(d: dict, image_id: str) -> PairedDetection:
    def det(x):
        return Detection(Box.from_list(x["box"]), float(x["score"]), Modality.parse(x["modality"]),
                         x.get("class_label", "person"), image_id)

    return PairedDetection(det(d["rgb"]), det(d["thermal"]), Provenance(d["provenance"]))


@dataclass
class StageImage:
    image_id: str
    pairs: list[PairedDetection]
    descriptions: list[tuple[str, str] | None] | None = None
    mscot: list[MSCoTScores | None] | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"image_id": self.image_id, "pairs": [pair_to_dict(p) for p in self.pairs]}
        if self.descriptions is not None:
            out["descriptions"] = [None if d is None else {"rgb": d[0], "thermal": d[1]}
                                   for d in self.descriptions]
        if self.mscot is not None:
            out["mscot"] = [None if s is None else s.to_dict() for s in self.mscot]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StageImage":
        image_id = d["image_id"]
        descs = d.get("descriptions")
        scores = d.get("mscot")
        return cls(
            image_id,
            [pair_from_dict(p, image_id) for p in d["pairs"]],
            None if descs is None else [None if x is None else (x["rgb"], x["thermal"]) for x in descs],
            None if scores is None else [None if x is None else MSCoTScores.from_dict(x) for x in scores],
        )


def save_stage(path, images: Sequence[StageImage], manifest: Sequence[ImageRecord] = ()) -> None:
    write_json(path, {"schema_version": SCHEMA_VERSION, "kind": "stage",
                      "image_manifest": [r.to_dict() for r in manifest],
                      "images": [im.to_dict() for im in images]})


def load_stage(path) -> tuple[list[StageImage], list[ImageRecord]]:
    doc = read_json(path)
    _check_version(path, doc)
    try:
        images = [StageImage.from_dict(x) for x in _require(path, doc, "images", list)]
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(path, f"malformed stage file ({exc})") from None
    return images, _manifest(path, doc.get("image_manifest", []))
