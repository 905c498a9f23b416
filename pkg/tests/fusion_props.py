"""Fusion property checks shared by the unit and acceptance suites.

``check_instance`` draws one random valid input and returns the list of
violated properties (empty when all hold).
"""

from __future__ import annotations

import random

from msfuse.fusion import (
    BoxFusionStrategy,
    FusionConfig,
    ScoreFusionStrategy,
    box_fuse,
    score_fuse,
    vl_fuse,
)
from msfuse.geometry import Box, Detection, Modality
from msfuse.language.branch import MSCoTScores
from msfuse.pairing import PairedDetection, Provenance

AVG, MAX = ScoreFusionStrategy.AVG, ScoreFusionStrategy.MAX
SAVG, ARGMAX = BoxFusionStrategy.SAVG, BoxFusionStrategy.ARGMAX


def rand_box(rng: random.Random) -> Box:
    x, y = rng.uniform(-500, 500), rng.uniform(-500, 500)
    return Box(x, y, x + rng.uniform(0.1, 300), y + rng.uniform(0.1, 300))


def rand_score(rng: random.Random) -> float:
    r = rng.random()
    if r < 0.05:
        return 0.0
    if r < 0.1:
        return 1.0
    return rng.random()


def _within(box: Box, a: Box, b: Box) -> bool:
    return all(min(p, q) <= v <= max(p, q) for v, p, q in zip(box.to_list(), a.to_list(), b.to_list()))


def check_instance(rng: random.Random) -> list[str]:
    bad = []
    s1, s2 = rand_score(rng), rand_score(rng)
    b1, b2 = rand_box(rng), rand_box(rng)

    for st in (AVG, MAX):
        v = score_fuse(s1, s2, st)
        if not (min(s1, s2) <= v <= max(s1, s2)):
            bad.append(f"boundedness {st.value} {s1} {s2}")
        if score_fuse(s1, s1, st) != s1:
            bad.append(f"score idempotence {st.value} {s1}")
        up = s1 + rng.uniform(1e-6, 1.0) * (1.0 - s1)
        if up > s1:
            if st is MAX and score_fuse(up, s2, st) < v:
                bad.append(f"max monotonicity {s1}->{up} {s2}")
            if st is AVG and not score_fuse(up, s2, st) > v:
                bad.append(f"avg strict monotonicity {s1}->{up} {s2}")

    for st in (SAVG, ARGMAX):
        out = box_fuse(b1, s1, b2, s2, st)
        if not _within(out, b1, b2) or not out.is_valid():
            bad.append(f"convexity {st.value} {b1} {s1} {b2} {s2}")
        if box_fuse(b1, s1, b1, s1, st) != b1:
            bad.append(f"box idempotence {st.value} {b1} {s1}")
        # scale both weights by c > 0, keeping them inside [0, 1]
        top = max(s1, s2)
        if top > 0:
            c = rng.uniform(1e-3, 1.0 / top)
            scaled = box_fuse(b1, s1 * c, b2, s2 * c, st)
            if st is ARGMAX and (s1 * c >= s2 * c) == (s1 >= s2) and scaled != out:
                bad.append(f"argmax scale invariance c={c}")
            if st is SAVG and any(abs(p - q) > 1e-12 * max(1.0, abs(q))
                                  for p, q in zip(scaled.to_list(), out.to_list())):
                bad.append(f"s-avg scale invariance c={c}")
            k = 2.0 ** -rng.randint(0, 8)  # power-of-two scaling is exact in floating point
            if st is SAVG and box_fuse(b1, s1 * k, b2, s2 * k, st) != out:
                bad.append(f"s-avg exact scale invariance k={k}")

    # full vision-language fusion under a random strategy combination
    cfg = FusionConfig(rng.choice([AVG, MAX]), rng.choice([AVG, MAX]),
                       rng.choice([SAVG, ARGMAX]), rng.choice([SAVG, ARGMAX]), rng.choice([SAVG, ARGMAX]))
    pair = PairedDetection(Detection(b1, s1, Modality.RGB, "person", "im"),
                           Detection(b2, s2, Modality.THERMAL, "person", "im"), Provenance.MATCHED)
    lang = MSCoTScores(rand_score(rng), rand_score(rng), rand_score(rng), "person", "person", "person", "", 0)
    f = vl_fuse(pair, lang, cfg)
    t = f.trace
    if not (min(t.s_f_v, t.s_f_l) <= f.score <= max(t.s_f_v, t.s_f_l)):
        bad.append(f"fused score outside branch scores {cfg.label}")
    if not _within(f.box, t.b_f_v, t.b_f_l):
        bad.append(f"fused box outside branch boxes {cfg.label}")
    return bad
