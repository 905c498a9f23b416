"""End-to-end runs: pairing, crop & mark, descriptions, chain-of-thought scoring, fusion."""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .evaluation import EvalReport, evaluate
from .fusion import FusedDetection, FusionConfig, fuse_image
from .geometry import Modality
from .images import load_image
from .io import (
    DetectionSet,
    ImageRecord,
    StageImage,
    canonical_dumps,
    file_digest,
    load_detections,
    load_ground_truth,
    read_json,
    write_json,
    fused_doc,
)
from .language.branch import Description, MSCoTScores, describe_crops, mscot, run_ordered
from .language.clients import ChatClient, build_client
from .language.parse import ParseError
from .language.prompts import PromptTemplates
from .pairing import PairingConfig, dpair
from .vcm import vcm_batch

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    pairing: PairingConfig = field(default_factory=PairingConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    prompts: PromptTemplates = field(default_factory=PromptTemplates)
    client: dict = field(default_factory=lambda: {"kind": "mock", "seed": 0})
    max_inflight: int = 4
    workers: int = 1
    post_nms: bool = False
    nms_iou: float = 0.5
    score_threshold: float | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = dict(d or {})
        known = {"pairing", "fusion", "prompts", "client", "max_inflight", "workers",
                 "post_nms", "nms_iou", "score_threshold"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        client = {"kind": "mock", "seed": 0}
        client.update(d.get("client") or {})
        return cls(
            pairing=PairingConfig(**(d.get("pairing") or {})),
            fusion=FusionConfig.from_dict(d.get("fusion")),
            prompts=PromptTemplates.from_dict(d.get("prompts")),
            client=client,
            max_inflight=int(d.get("max_inflight", 4)),
            workers=int(d.get("workers", 1)),
            post_nms=bool(d.get("post_nms", False)),
            nms_iou=float(d.get("nms_iou", 0.5)),
            score_threshold=d.get("score_threshold"),
        )

    def to_dict(self) -> dict:
        return {
            "pairing": {"tau": self.pairing.tau},
            "fusion": self.fusion.to_dict(),
            "prompts": self.prompts.to_dict(),
            "client": dict(self.client),
            "max_inflight": self.max_inflight,
            "workers": self.workers,
            "post_nms": self.post_nms,
            "nms_iou": self.nms_iou,
            "score_threshold": self.score_threshold,
        }


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(read_json(path))


@dataclass
class RunManifest:
    tool_version: str
    config: dict
    client_id: str
    inputs: dict
    images: int = 0
    pairs: int = 0
    fallbacks: int = 0
    client_calls: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @property
    def total_client_calls(self) -> int:
        return sum(self.client_calls.values())


class _Timer:
    def __init__(self):
        self.totals: dict[str, float] = {}

    @contextmanager
    def __call__(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[stage] = self.totals.get(stage, 0.0) + time.perf_counter() - t0


@dataclass
class Inputs:
    rgb: DetectionSet
    thermal: DetectionSet
    images_root: Path
    digests: dict
    rgb_by_image: dict = field(init=False)
    thermal_by_image: dict = field(init=False)

    def __post_init__(self):
        self.rgb_by_image = self.rgb.by_image()
        self.thermal_by_image = self.thermal.by_image()

    @property
    def manifest(self) -> list[ImageRecord]:
        return self.rgb.manifest


def load_inputs(det_rgb_path, det_t_path, images_root) -> Inputs:
    rgb = load_detections(det_rgb_path)
    th = load_detections(det_t_path)
    if rgb.modality is not Modality.RGB:
        raise ValueError(f"{det_rgb_path}: expected an RGB detection file, got {rgb.modality.value}")
    if th.modality is not Modality.THERMAL:
        raise ValueError(f"{det_t_path}: expected a Thermal detection file, got {th.modality.value}")
    if [r.image_id for r in rgb.manifest] != [r.image_id for r in th.manifest]:
        raise ValueError("RGB and thermal detection files list different images")
    digests = {str(det_rgb_path): file_digest(det_rgb_path), str(det_t_path): file_digest(det_t_path)}
    return Inputs(rgb, th, Path(images_root), digests)


@dataclass
class LanguageResult:
    image_id: str
    stage: StageImage
    failures: list[str] = field(default_factory=list)


def _image_language(rec: ImageRecord, inputs: Inputs, cfg: PipelineConfig, client: ChatClient,
                    timer: _Timer, with_mscot: bool = True) -> LanguageResult:
    dets_rgb = inputs.rgb_by_image.get(rec.image_id, [])
    dets_t = inputs.thermal_by_image.get(rec.image_id, [])
    with timer("pair"):
        pairs = dpair(dets_rgb, dets_t, cfg.pairing)
    if not pairs:
        return LanguageResult(rec.image_id, StageImage(rec.image_id, [], [], [] if with_mscot else None))
    descs: dict[Modality, list[Description | None]] = {}
    for modality, rel, prompt in ((Modality.RGB, rec.path_rgb, cfg.prompts.p_rgb),
                                  (Modality.THERMAL, rec.path_thermal, cfg.prompts.p_t)):
        with timer("load_image"):
            image = load_image(inputs.images_root / rel)
        with timer("vcm"):
            crops = vcm_batch(image, pairs, modality)
        with timer("describe"):
            descs[modality] = describe_crops(crops, modality, prompt, client, rec.image_id, cfg.max_inflight)

    failures = []
    pair_descs: list[tuple[Description, Description] | None] = []
    for i, (dr, dt) in enumerate(zip(descs[Modality.RGB], descs[Modality.THERMAL])):
        if dr is None or dt is None:
            failures.append(f"{rec.image_id}#{i}: empty description")
            pair_descs.append(None)
        else:
            pair_descs.append((dr, dt))
    stage = StageImage(rec.image_id, pairs,
                       [None if p is None else (p[0].text, p[1].text) for p in pair_descs])
    if with_mscot:
        stage.mscot, more = score_pairs(rec.image_id, pair_descs, cfg, client, timer)
        failures.extend(more)
    for f in failures:
        log.warning("language branch fallback: %s", f)
    return LanguageResult(rec.image_id, stage, failures)


def score_pairs(image_id: str, pair_descs: Sequence[tuple[Description, Description] | None],
                cfg: PipelineConfig, client: ChatClient, timer: _Timer | None = None):
    """MSCoT per pair; parse failures become ``None`` (vision-only fusion for that pair)."""
    timer = timer or _Timer()
    failures = []

    def one(item):
        if item is None:
            return None
        try:
            return mscot(item[0], item[1], cfg.prompts, client)
        except ParseError as exc:
            failures.append(f"{image_id}#{item[0].pair_index}: {exc}")
            return None

    with timer("mscot"):
        scores = run_ordered(one, pair_descs, cfg.max_inflight)
    failures.sort()
    return scores, failures


def fuse_stage(stage: StageImage, cfg: PipelineConfig, fusion: FusionConfig | None = None) -> list[FusedDetection]:
    lang = stage.mscot if stage.mscot is not None else [None] * len(stage.pairs)
    fused = fuse_image(stage.pairs, lang, fusion or cfg.fusion,
                       nms_iou=cfg.nms_iou if cfg.post_nms else None)
    if cfg.score_threshold is not None:
        fused = [d for d in fused if d.score >= cfg.score_threshold]
    return fused


def _client_for(cfg: PipelineConfig, cache_dir, inner: ChatClient | None):
    opts = {k: v for k, v in cfg.client.items() if k not in ("kind", "seed")}
    return build_client(cfg.client.get("kind", "mock"), seed=int(cfg.client.get("seed", 0)),
                        cache_dir=cache_dir, max_inflight=cfg.max_inflight,
                        http_options=opts, inner=inner)


def _call_stats(client, base) -> tuple[dict, dict]:
    calls = dict(getattr(base, "calls", {}))
    cache = {"hits": getattr(client, "hits", 0), "misses": getattr(client, "misses", 0)}
    return calls, cache


def run_language(inputs: Inputs, cfg: PipelineConfig, client: ChatClient, timer: _Timer | None = None,
                 with_mscot: bool = True) -> list[LanguageResult]:
    timer = timer or _Timer()
    return run_ordered(lambda rec: _image_language(rec, inputs, cfg, client, timer, with_mscot),
                       inputs.manifest, cfg.workers)


def run_pipeline(det_rgb_path, det_t_path, images_root, config_path=None, out_path="fused.json", *,
                 config: PipelineConfig | None = None, cache_dir=None,
                 client: ChatClient | None = None) -> RunManifest:
    """Run every stage and write fused detections plus ``<out>.manifest.json``.

    ``client`` replaces the configured base client (it is still wrapped with
    retry, in-flight bound and cache).
    """
    cfg = config or load_config(config_path)
    timer = _Timer()
    with timer("load_inputs"):
        inputs = load_inputs(det_rgb_path, det_t_path, images_root)
    wrapped, base = _client_for(cfg, cache_dir, client)
    results = run_language(inputs, cfg, wrapped, timer)
    fused = []
    with timer("fuse"):
        for r in results:
            fused.extend(fuse_stage(r.stage, cfg))
    out_path = Path(out_path)
    text = canonical_dumps(fused_doc(fused))
    out_path.write_text(text, encoding="utf-8")

    calls, cache = _call_stats(wrapped, base)
    manifest = RunManifest(
        tool_version=__version__,
        config=cfg.to_dict(),
        client_id=base.client_id,
        inputs={"det_rgb": str(det_rgb_path), "det_thermal": str(det_t_path),
                "images_root": str(images_root), "digests": inputs.digests,
                "cache_dir": None if cache_dir is None else str(cache_dir)},
        images=len(results),
        pairs=sum(len(r.stage.pairs) for r in results),
        fallbacks=sum(len(r.failures) for r in results),
        client_calls=calls,
        cache=cache,
        timings={k: round(v, 6) for k, v in sorted(timer.totals.items())},
        outputs={"fused": str(out_path), "sha256": file_digest(out_path)},
    )
    write_json(manifest_path_for(out_path), manifest.to_dict())
    return manifest


def manifest_path_for(out_path) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.stem + ".manifest.json")


def replay(manifest_path, out_path, cache_dir=None) -> RunManifest:
    """Re-run a recorded pipeline run (same inputs and config), normally against its warm cache."""
    m = read_json(manifest_path)
    inputs = m["inputs"]
    for path, digest in inputs["digests"].items():
        if file_digest(path) != digest:
            raise ValueError(f"{path} changed since the recorded run")
    return run_pipeline(inputs["det_rgb"], inputs["det_thermal"], inputs["images_root"],
                        out_path=out_path, config=PipelineConfig.from_dict(m["config"]),
                        cache_dir=cache_dir if cache_dir is not None else inputs.get("cache_dir"))


@dataclass
class AblationResult:
    rows: list[tuple[FusionConfig, EvalReport]]
    client_calls: dict
    cache: dict

    def table(self) -> str:
        from .evaluation import format_table

        return format_table([(c.label, r) for c, r in self.rows])

    def to_dict(self) -> dict:
        return {"rows": [{"config": c.to_dict(), "report": r.to_dict()} for c, r in self.rows],
                "client_calls": self.client_calls, "cache": self.cache}


def run_ablation(det_rgb_path, det_t_path, images_root, gt_path, grid: Sequence[FusionConfig],
                 config_path=None, *, config: PipelineConfig | None = None, cache_dir=None,
                 client: ChatClient | None = None, iou_thr: float = 0.5) -> AblationResult:
    """Evaluate each fusion configuration over one shared language-branch run."""
    cfg = config or load_config(config_path)
    inputs = load_inputs(det_rgb_path, det_t_path, images_root)
    gts, gt_conds = load_ground_truth(gt_path)
    conditions = {r.image_id: r.condition for r in inputs.manifest}
    conditions.update(gt_conds)
    wrapped, base = _client_for(cfg, cache_dir, client)
    results = run_language(inputs, cfg, wrapped)
    rows = []
    for fc in grid:
        fused = [d for r in results for d in fuse_stage(r.stage, cfg, fc)]
        rows.append((fc, evaluate(fused, gts, conditions, iou_thr=iou_thr)))
    calls, cache = _call_stats(wrapped, base)
    return AblationResult(rows, calls, cache)


def evaluate_files(fused_path, gt_path, iou_thr: float = 0.5, image_conditions: dict | None = None) -> EvalReport:
    from .io import load_fused

    dets = load_fused(fused_path)
    gts, conds = load_ground_truth(gt_path)
    if image_conditions:
        conds = {**image_conditions, **conds}
    return evaluate(dets, gts, conds, iou_thr=iou_thr)


def stage_summary(results: Sequence[LanguageResult]) -> dict[str, Any]:
    return {"images": len(results), "pairs": sum(len(r.stage.pairs) for r in results),
            "fallbacks": [f for r in results for f in r.failures]}
