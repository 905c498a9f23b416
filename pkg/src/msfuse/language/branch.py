"""Language branch: per-pedestrian descriptions from marked crops, then two-step
chain-of-thought scoring of each (RGB, thermal) description pair."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

from ..geometry import Detection, Modality
from ..pairing import PairedDetection, PairingConfig, dpair
from ..vcm import ImageBuffer, MarkedCrop, vcm_batch
from .clients import ChatClient, TransportError
from .parse import ParseError, gate, parse_prediction
from .prompts import REPAIR_PROMPT, PromptTemplates, multi_context, single_context

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class PairTransportError(TransportError):
    def __init__(self, pair_index: int, modality: Modality | None, cause: Exception):
        where = f"pair {pair_index}" + (f" ({modality.value})" if modality else "")
        super().__init__(f"{where}: {cause}")
        self.pair_index = pair_index


class DescriptionError(ValueError):
    def __init__(self, pair_index: int, modality: Modality):
        super().__init__(f"pair {pair_index}: empty {modality.value} description")
        self.pair_index = pair_index


@dataclass(frozen=True)
class Description:
    text: str
    modality: Modality
    pair_index: int
    image_id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("description text must not be empty")


@dataclass(frozen=True)
class MSCoTScores:
    s_rgb_l: float
    s_t_l: float
    s_f_l: float
    c_rgb_l: str
    c_t_l: str
    c_f_l: str
    rationale: str
    pair_index: int

    def to_dict(self) -> dict:
        return {
            "pair_index": self.pair_index,
            "s_rgb_l": self.s_rgb_l, "s_t_l": self.s_t_l, "s_f_l": self.s_f_l,
            "c_rgb_l": self.c_rgb_l, "c_t_l": self.c_t_l, "c_f_l": self.c_f_l,
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MSCoTScores":
        return cls(float(d["s_rgb_l"]), float(d["s_t_l"]), float(d["s_f_l"]),
                   d["c_rgb_l"], d["c_t_l"], d["c_f_l"], d.get("rationale", ""), int(d["pair_index"]))


def run_ordered(fn: Callable[[T], R], items: Iterable[T], max_workers: int = 1) -> list[R]:
    """Map ``fn`` over ``items``; results come back in input order regardless of completion order."""
    items = list(items)
    if max_workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def describe_crops(crops: Sequence[MarkedCrop], modality: Modality, prompt: str, client: ChatClient,
                   image_id: str = "", max_workers: int = 1) -> list[Description | None]:
    """One describe_image call per crop. Empty replies come back as ``None``."""

    def one(crop: MarkedCrop) -> Description | None:
        try:
            text = client.describe_image(crop.image, prompt)
        except TransportError as exc:
            raise PairTransportError(crop.pair_index, modality, exc) from exc
        if not text or not text.strip():
            return None
        return Description(text, modality, crop.pair_index, image_id)

    return run_ordered(one, crops, max_workers)


def cpdg(image_rgb: ImageBuffer, image_t: ImageBuffer, dets_rgb: Sequence[Detection],
         dets_t: Sequence[Detection], templates: PromptTemplates, client: ChatClient,
         cfg: PairingConfig = PairingConfig(), max_workers: int = 1,
         ) -> tuple[list[Description], list[Description], list[PairedDetection]]:
    """Pair detections, crop & mark both images, and describe every crop."""
    pairs = dpair(dets_rgb, dets_t, cfg)
    if not pairs:
        return [], [], []
    image_id = pairs[0].image_id
    out = []
    for modality, image, prompt in ((Modality.RGB, image_rgb, templates.p_rgb),
                                    (Modality.THERMAL, image_t, templates.p_t)):
        crops = vcm_batch(image, pairs, modality)
        descs = describe_crops(crops, modality, prompt, client, image_id, max_workers)
        for i, d in enumerate(descs):
            if d is None:
                raise DescriptionError(i, modality)
        out.append(descs)
    return out[0], out[1], pairs


def _ask(client: ChatClient, context: str, prompt: str, need: int, pair_index: int) -> tuple[list, str]:
    """Complete and parse, with one repair prompt if fewer than ``need`` records come back."""
    raw = ""
    for attempt, p in enumerate((prompt, f"{prompt}\n{REPAIR_PROMPT}")):
        try:
            raw = client.complete(context, p)
        except TransportError as exc:
            raise PairTransportError(pair_index, None, exc) from exc
        try:
            records = parse_prediction(raw)
        except ParseError:
            records = []
        if len(records) >= need:
            return records, raw
        if attempt == 0:
            log.info("pair %d: reply not in [class, prediction score] form, sending repair prompt", pair_index)
    raise ParseError(f"pair {pair_index}: expected {need} record(s) after repair", raw)


def mscot(d_rgb: Description, d_t: Description, templates: PromptTemplates,
          client: ChatClient) -> MSCoTScores:
    """Single-modal scores first, then a fused score conditioned on them.

    Scores of any slot whose class is not ``person`` are set to zero.
    """
    if d_rgb.pair_index != d_t.pair_index:
        raise ValueError(f"descriptions belong to pairs {d_rgb.pair_index} and {d_t.pair_index}")
    idx = d_rgb.pair_index
    records, _ = _ask(client, single_context(d_rgb.text, d_t.text), templates.p_single, 2, idx)
    (c_rgb, s_rgb), (c_t, s_t) = records[0], records[1]
    s_rgb, s_t = gate(c_rgb, s_rgb), gate(c_t, s_t)

    records, raw = _ask(client, multi_context(d_rgb.text, d_t.text, s_rgb, s_t), templates.p_multi, 1, idx)
    # the final answer follows the rationale
    c_f, s_f = records[-1]
    return MSCoTScores(s_rgb, s_t, gate(c_f, s_f), c_rgb, c_t, c_f, raw, idx)
