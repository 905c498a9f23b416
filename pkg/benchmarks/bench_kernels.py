"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from msfuse import kernels


def _boxes(rng, n):
    xy = rng.uniform(0, 1000, size=(n, 2))
    wh = rng.uniform(10, 80, size=(n, 2))
    return np.hstack([xy, xy + wh])


def workloads(seed: int = 0):
    rng = np.random.default_rng(seed)
    a, b = _boxes(rng, 300), _boxes(rng, 300)
    # thermal boxes jittered around the RGB ones so pairing actually matches
    t = a[:200] + rng.uniform(-4, 4, size=(200, 4))
    sa, st = rng.random(300).tolist(), rng.random(200).tolist()
    dets, gts = _boxes(rng, 2000), _boxes(rng, 400)
    ign = rng.random(400) < 0.05
    nms_boxes = np.vstack([a, a + 2, a - 2])
    nms_scores = rng.random(nms_boxes.shape[0]).tolist()
    return {
        "iou_matrix 300x300": lambda k: k.iou_matrix(a, b),
        "dpair 300 rgb x 200 thermal": lambda k: k.dpair_indices(a, sa, t, st, 0.5),
        "greedy_match 2000 dets x 400 gts": lambda k: k.greedy_match(dets, gts, ign, 0.5),
        "nms 900 boxes": lambda k: k.nms(nms_boxes, nms_scores, 0.5),
    }


def run(repeat: int = 5) -> list[dict]:
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    rows = []
    for name, fn in workloads().items():
        row = {"kernel": name}
        outputs = {}
        for bname, mod in backends.items():
            outputs[bname] = fn(mod)
            row[bname] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=repeat))
        # the backends must agree before their timings mean anything
        vals = list(outputs.values())
        row["agree"] = all(_same(vals[0], v) for v in vals[1:])
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def _same(x, y) -> bool:
    if isinstance(x, tuple):
        return all(_same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json")
    args = p.parse_args(argv)
    rows = run(args.repeat)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<34} {'python s':>10} {'cython s':>10} {'speedup':>8}  agree")
    for r in rows:
        cy = f"{r['cython']:10.5f}" if "cython" in r else f"{'-':>10}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else f"{'-':>8}"
        print(f"{r['kernel']:<34} {r['python']:10.5f} {cy} {sp}  {r['agree']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0 if all(r["agree"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
