"""Acceptance gate: eight criteria, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import random
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from fusion_props import check_instance  # noqa: E402
from oracles import (  # noqa: E402
    ap_reference,
    dpair_reference,
    iou_exact,
    mr_reference,
    pooled_reference,
    random_eval_instance,
)

from msfuse.evaluation import Condition, average_precision, evaluate, log_average_miss_rate  # noqa: E402
from msfuse.fusion import FusionConfig, box_fuse, box_grid, score_grid, vl_fuse  # noqa: E402
from msfuse.fusion import BoxFusionStrategy  # noqa: E402
from msfuse.geometry import Box, Detection, Modality  # noqa: E402
from msfuse.io import load_fused  # noqa: E402
from msfuse.language.branch import MSCoTScores, mscot, Description  # noqa: E402
from msfuse.language.clients import MockClient  # noqa: E402
from msfuse.language.parse import ParseError, gate, parse_prediction  # noqa: E402
from msfuse.language.prompts import PromptTemplates  # noqa: E402
from msfuse.pairing import PairedDetection, PairingConfig, Provenance, dpair  # noqa: E402
from msfuse.pipeline import PipelineConfig, run_ablation, run_pipeline  # noqa: E402
from msfuse.vcm import ImageBuffer, crop_and_mark  # noqa: E402

GOLDEN = Path(__file__).parent / "fixtures" / "golden"
GOLDEN_CFG = {"client": {"kind": "mock", "seed": 7}}

RESULTS: dict[int, tuple[str, bool, str]] = {}


def record(num: int, name: str, ok: bool, detail: str) -> None:
    RESULTS[num] = (name, ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}")
    assert ok, detail


# 1 ---------------------------------------------------------------------------


def _pairing_instance(rng: random.Random):
    """<= 10 detections per modality, unique scores, unique nonzero cross-modal IoUs."""
    while True:
        nr, nt = rng.randint(0, 10), rng.randint(0, 10)
        scores = rng.sample(range(1, 1_000_000), nr + nt)
        anchors = []

        def mk(m, s):
            if anchors and rng.random() < 0.7:
                # a jittered copy of an existing box, so real matches (and competition) occur
                a = rng.choice(anchors)
                j = [rng.uniform(-3, 3) for _ in range(4)]
                x1, y1 = a.x1 + j[0], a.y1 + j[1]
                box = Box(x1, y1, max(a.x2 + j[2], x1 + 1), max(a.y2 + j[3], y1 + 1))
            else:
                x, y = rng.uniform(0, 60), rng.uniform(0, 60)
                box = Box(x, y, x + rng.uniform(4, 20), y + rng.uniform(4, 20))
                anchors.append(box)
            return Detection(box, s / 1_000_000, m, "person", "im")

        rgb = [mk(Modality.RGB, s) for s in scores[:nr]]
        th = [mk(Modality.THERMAL, s) for s in scores[nr:]]
        ious = [v for v in (iou_exact(a.box, b.box) for a in rgb for b in th) if v > 0]
        if len(set(ious)) == len(ious):
            return rgb, th


def criterion_1():
    rng = random.Random(1)
    instances = [_pairing_instance(rng) for _ in range(1000)]
    cfg = PairingConfig(0.5)
    t0 = time.perf_counter()
    outputs = [dpair(r, t, cfg) for r, t in instances]
    elapsed = time.perf_counter() - t0
    mismatches = sum(out != dpair_reference(r, t, 0.5) for out, (r, t) in zip(outputs, instances))
    matched = sum(p.provenance is Provenance.MATCHED for out in outputs for p in out)
    ok = mismatches == 0 and elapsed < 5.0
    return ok, f"1000 instances, {mismatches} mismatches, {matched} matched pairs, dpair time {elapsed:.3f}s (< 5s)"


# 2 ---------------------------------------------------------------------------


def criterion_2():
    rng = random.Random(2)
    violations = []
    for _ in range(10_000):
        violations += check_instance(rng)
    b1, b2 = Box(0, 0, 10, 10), Box(4, 0, 14, 10)
    ex1 = box_fuse(b1, 0.9, b2, 0.3, BoxFusionStrategy.SAVG).to_list()
    pair = PairedDetection(Detection(b1, 0.9, Modality.RGB, "person", "im"),
                           Detection(b2, 0.3, Modality.THERMAL, "person", "im"), Provenance.MATCHED)
    ex2 = vl_fuse(pair, MSCoTScores(0.9, 0.0, 0.1, "person", "person", "person", "", 0)).box.to_list()
    ex3 = average_precision([0.9, 0.8, 0.7], [1, 0, 1], 2)
    err = max(max(abs(a - b) for a, b in zip(ex1, [1, 0, 11, 10])),
              max(abs(a - b) for a, b in zip(ex2, [0.9, 0, 10.9, 10])),
              abs(ex3 - 5 / 6))
    ok = not violations and err <= 1e-12
    return ok, f"10000 random inputs, {len(violations)} violations; worked examples max error {err:.1e} (<= 1e-12)"


# 3 ---------------------------------------------------------------------------


def criterion_3():
    from msfuse.synthetic import make_dataset

    with tempfile.TemporaryDirectory() as tmp:
        paths = make_dataset(tmp, n_images=6, seed=3)
        grid = score_grid() + box_grid()
        res = run_ablation(paths["det_rgb"], paths["det_thermal"], paths["root"], paths["gt"], grid,
                           config=PipelineConfig.from_dict({"client": {"kind": "mock", "seed": 3}}))
    finite = all(v is not None and math.isfinite(v)
                 for _, r in res.rows for v in (r.ap_all, r.mr_day, r.mr_night, r.mr_all))
    default = [r for c, r in res.rows if c == FusionConfig()]
    ok = len(res.rows) == 12 and finite and len(default) >= 1
    d = default[0] if default else None
    detail = (f"4 score + 8 box configs ran, all metrics finite={finite}; "
              f"default Max/Avg + s-avg: AP {d.ap_all:.4f}, MR {d.mr_all:.4f}" if d else "default config missing")
    return ok, detail


# 4 ---------------------------------------------------------------------------


def criterion_4():
    rng = random.Random(4)
    worst = 0.0
    for _ in range(500):
        dets, gts, conds = random_eval_instance(rng, max_dets=20, max_gts=10, max_images=4)
        rep = evaluate(dets, gts, conds)
        s, lab, t = pooled_reference(dets, gts, conds)
        worst = max(worst, abs(rep.ap_all - ap_reference(s, lab, t)),
                    abs(rep.mr_all - mr_reference(s, lab, t, len(conds))))
        for cond, got in ((Condition.DAY, rep.mr_day), (Condition.NIGHT, rep.mr_night)):
            ims = [i for i, c in conds.items() if c is cond]
            if ims:
                s, lab, t = pooled_reference(dets, gts, ims)
                worst = max(worst, abs(got - mr_reference(s, lab, t, len(ims))))
            elif got is not None:
                worst = math.inf
    perfect = (average_precision([0.9, 0.8, 0.7], [1, 1, 1], 3), log_average_miss_rate([0.9, 0.8, 0.7], [1, 1, 1], 3, 2))
    empty = (average_precision([], [], 3), log_average_miss_rate([], [], 3, 2))
    ok = worst <= 1e-9 and perfect == (1.0, 0.0) and empty == (0.0, 1.0)
    return ok, f"500 instances, max |diff| {worst:.1e} (<= 1e-9); perfect AP/MR {perfect}; empty AP/MR {empty}"


# 5 ---------------------------------------------------------------------------


def criterion_5():
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(100):
        W, H = int(rng.integers(8, 120)), int(rng.integers(8, 120))
        src = rng.integers(0, 256, size=(H, W, 3), dtype=np.uint8)
        img = ImageBuffer(src)
        w, h = int(rng.integers(1, W)), int(rng.integers(1, H))
        x1, y1 = int(rng.integers(-w // 2, W - 1)), int(rng.integers(-h // 2, H - 1))
        crop = crop_and_mark(img, Box(x1, y1, x1 + w, y1 + h))
        rx1, ry1, rx2, ry2 = (int(v) for v in crop.crop_region.to_list())
        # expected clamped 2w x 2h window
        ex1, ey1 = x1 - w // 2, y1 - h // 2
        want = (max(ex1, 0), max(ey1, 0), min(ex1 + 2 * w, W), min(ey1 + 2 * h, H))
        if (rx1, ry1, rx2, ry2) != want or crop.image.pixels.shape != (ry2 - ry1, rx2 - rx1, 3):
            failures += 1
            continue
        ys, xs = np.mgrid[ry1:ry2, rx1:rx2]
        inside = (xs >= x1) & (xs < x1 + w) & (ys >= y1) & (ys < y1 + h)
        edge = inside & ((xs == x1) | (xs == x1 + w - 1) | (ys == y1) | (ys == y1 + h - 1))
        px = crop.image.pixels
        if not (np.all(px[edge] == (0, 255, 0)) and np.array_equal(px[~edge], src[ry1:ry2, rx1:rx2][~edge])):
            failures += 1
        if not np.array_equal(img.pixels, src):
            failures += 1
    return failures == 0, f"100 random cases, {failures} failures (marker exact, rest byte-identical, clamped 2w x 2h)"


# 6 ---------------------------------------------------------------------------


def _golden_run(out, cache=None):
    return run_pipeline(GOLDEN / "det_rgb.json", GOLDEN / "det_thermal.json", GOLDEN, out_path=out,
                        config=PipelineConfig.from_dict(GOLDEN_CFG), cache_dir=cache)


def criterion_6():
    expected = (GOLDEN / "expected_fused.json").read_bytes()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        m1 = _golden_run(tmp / "a.json", tmp / "cache")
        m2 = _golden_run(tmp / "b.json", tmp / "cache")
        m3 = _golden_run(tmp / "c.json")
        same = (tmp / "a.json").read_bytes() == (tmp / "b.json").read_bytes() == (tmp / "c.json").read_bytes() == expected
    accounting = m1.client_calls == {"describe_image": 2 * m1.pairs, "complete": 2 * m1.pairs}
    ok = same and m2.total_client_calls == 0 and accounting and m3.client_calls == m1.client_calls
    return ok, (f"golden byte-identical={same}; P={m1.pairs}, calls {m1.client_calls}; "
                f"warm-cache rerun calls={m2.total_client_calls}")


# 7 ---------------------------------------------------------------------------


def criterion_7():
    rng = random.Random(7)
    bad = 0
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 _-"
    for _ in range(2000):
        label = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 10))).strip() or "person"
        s = rng.choice([0.0, 1.0, rng.random(), round(rng.random(), 2)])
        for text in (f"[{label}, {s}]", f"[{label},{s!r}]", f"note: [ {label.upper()} ,  {s} ]."):
            if parse_prediction(text) != [(label.lower(), s)]:
                bad += 1
    gated = (gate("car", 0.8), gate("person", 0.8))
    clamped = (parse_prediction("[person, 1.3]"), parse_prediction("[person, -0.4]"))
    client = _Scripted(["[person, 0.92], [car, 0.85]", "[person, 0.90]"])
    scores = mscot(Description("a", Modality.RGB, 0), Description("b", Modality.THERMAL, 0), PromptTemplates(), client)
    try:
        parse_prediction("no detection here")
        errors = False
    except ParseError:
        errors = True
    ok = (bad == 0 and gated == (0.0, 0.8) and clamped == ([("person", 1.0)], [("person", 0.0)])
          and scores.s_t_l == 0.0 and scores.s_rgb_l == 0.92 and errors)
    return ok, (f"6000 round-trips, {bad} failures; non-person gate {gated}; clamp 1.3->1.0, -0.4->0.0; "
                f"record-free text raises={errors}")


class _Scripted:
    client_id = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)

    def describe_image(self, image, prompt):
        return "figure"

    def complete(self, context, prompt):
        return self.replies.pop(0)


# 8 ---------------------------------------------------------------------------


class _FailOnePair(MockClient):
    def __init__(self, seed, marker):
        super().__init__(seed)
        self.marker = marker

    def complete(self, context, prompt):
        if self.marker in context:
            self._count("complete")
            return "I cannot tell."
        return super().complete(context, prompt)


def criterion_8():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _golden_run(tmp / "probe.json", tmp / "cache")
        records = [json.loads(p.read_text()) for p in (tmp / "cache").glob("*.json")]
        desc = sorted(r["response"] for r in records if r["endpoint"] == "describe_image")[0]
        marker = desc.split("(ref ")[1].rstrip(").")
        m = run_pipeline(GOLDEN / "det_rgb.json", GOLDEN / "det_thermal.json", GOLDEN, out_path=tmp / "fb.json",
                         config=PipelineConfig.from_dict(GOLDEN_CFG), client=_FailOnePair(7, marker))
        out = load_fused(tmp / "fb.json")
    expected = load_fused(GOLDEN / "expected_fused.json")
    flagged = [i for i, d in enumerate(out) if d.trace.fallback]
    vision_only = all((out[i].score, out[i].box) == (out[i].trace.s_f_v, out[i].trace.b_f_v) for i in flagged)
    others_same = all(out[i] == expected[i] for i in range(len(out)) if i not in flagged)
    ok = len(flagged) == 1 and m.fallbacks == 1 and vision_only and others_same and len(out) == len(expected)
    return ok, (f"{len(flagged)} flagged pair(s) of {len(out)}; vision-only={vision_only}; "
                f"other pairs unchanged={others_same}; batch completed")


CRITERIA = [
    (1, "pairing oracle", criterion_1),
    (2, "fusion arithmetic", criterion_2),
    (3, "strategy matrix", criterion_3),
    (4, "metric oracle", criterion_4),
    (5, "VCM pixel exactness", criterion_5),
    (6, "language-branch determinism", criterion_6),
    (7, "parser", criterion_7),
    (8, "fallback", criterion_8),
]


def _run(num):
    _, name, fn = CRITERIA[num - 1]
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure of the criterion, reported like one
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    record(num, name, ok, detail)


def test_criterion_1_pairing_oracle():
    _run(1)


def test_criterion_2_fusion_arithmetic():
    _run(2)


def test_criterion_3_strategy_matrix():
    _run(3)


def test_criterion_4_metric_oracle():
    _run(4)


def test_criterion_5_vcm_pixel_exactness():
    _run(5)


def test_criterion_6_language_determinism():
    _run(6)


def test_criterion_7_parser():
    _run(7)


def test_criterion_8_fallback():
    _run(8)


if __name__ == "__main__":
    failed = 0
    for num, _, _ in CRITERIA:
        try:
            _run(num)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
