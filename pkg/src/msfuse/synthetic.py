"""Small synthetic RGB/thermal scenes with detector dumps and ground truth."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluation import Condition, GroundTruthBox
from .geometry import Box, Detection, Modality
from .images import save_png
from .io import ImageRecord, save_detections, save_ground_truth
from .vcm import ImageBuffer


def _jitter(rng, box: Box, px: float, width: int, height: int) -> Box:
    d = rng.uniform(-px, px, size=4)
    x1 = min(max(box.x1 + d[0], 0.0), width - 2.0)
    y1 = min(max(box.y1 + d[1], 0.0), height - 2.0)
    x2 = min(max(box.x2 + d[2], x1 + 1.0), float(width))
    y2 = min(max(box.y2 + d[3], y1 + 1.0), float(height))
    return Box(*(round(v, 2) for v in (x1, y1, x2, y2)))


def make_dataset(root: str | Path, n_images: int = 5, seed: int = 7,
                 width: int = 96, height: int = 72) -> dict[str, Path]:
    """Write images, two detection files and a ground-truth file under ``root``.

    Even-numbered images are daytime, odd ones nighttime. At night the RGB
    detector misses more people; the thermal detector is steady.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest, gts, conditions = [], [], {}
    dets = {Modality.RGB: [], Modality.THERMAL: []}
    for i in range(n_images):
        image_id = f"img{i:03d}"
        cond = Condition.DAY if i % 2 == 0 else Condition.NIGHT
        conditions[image_id] = cond
        base = 150 if cond is Condition.DAY else 35
        rgb = rng.integers(base - 20, base + 20, size=(height, width, 3), dtype=np.int64)
        th = rng.integers(10, 50, size=(height, width), dtype=np.int64)
        for _ in range(int(rng.integers(1, 4))):
            w = int(rng.integers(8, 15))
            h = int(rng.integers(2 * w - 4, 2 * w + 2))
            x = int(rng.integers(0, width - w))
            y = int(rng.integers(0, height - h))
            gt = Box(float(x), float(y), float(x + w), float(y + h))
            gts.append(GroundTruthBox(gt, image_id, cond))
            rgb[y:y + h, x:x + w] = rng.integers(60, 220, size=3)
            th[y:y + h, x:x + w] = rng.integers(180, 250)
            p_rgb = 0.9 if cond is Condition.DAY else 0.5
            if rng.random() < p_rgb:
                dets[Modality.RGB].append(Detection(_jitter(rng, gt, 2.0, width, height),
                                                    round(float(rng.uniform(0.4, 0.99)), 3),
                                                    Modality.RGB, "person", image_id))
            if rng.random() < 0.9:
                dets[Modality.THERMAL].append(Detection(_jitter(rng, gt, 2.0, width, height),
                                                        round(float(rng.uniform(0.5, 0.99)), 3),
                                                        Modality.THERMAL, "person", image_id))
        for modality in (Modality.RGB, Modality.THERMAL):
            if rng.random() < 0.5:
                w = int(rng.integers(6, 12))
                x = int(rng.integers(0, width - w))
                y = int(rng.integers(0, height - 2 * w))
                fp = Box(float(x), float(y), float(x + w), float(y + 2 * w))
                dets[modality].append(Detection(fp, round(float(rng.uniform(0.05, 0.6)), 3),
                                                modality, "person", image_id))
        rel_rgb, rel_t = f"images/{image_id}_rgb.png", f"images/{image_id}_thermal.png"
        save_png(ImageBuffer(rgb.clip(0, 255).astype(np.uint8)), root / rel_rgb)
        save_png(ImageBuffer(th.clip(0, 255).astype(np.uint8)), root / rel_t)
        manifest.append(ImageRecord(image_id, rel_rgb, rel_t, cond))

    paths = {"root": root, "det_rgb": root / "det_rgb.json", "det_thermal": root / "det_thermal.json",
             "gt": root / "gt.json"}
    save_detections(paths["det_rgb"], Modality.RGB, dets[Modality.RGB], manifest)
    save_detections(paths["det_thermal"], Modality.THERMAL, dets[Modality.THERMAL], manifest)
    save_ground_truth(paths["gt"], gts, conditions)
    return paths
