"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 bad input (schema or missing file),
3 chat client failure after retries.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .evaluation import format_table
from .fusion import box_grid, score_grid
from .geometry import Modality
from .images import load_image, save_png
from .io import (
    SchemaError,
    StageImage,
    canonical_dumps,
    load_stage,
    save_fused,
    save_stage,
    write_json,
)
from .language.branch import Description
from .language.clients import TransportError
from .pairing import dpair
from .pipeline import (
    PipelineConfig,
    _client_for,
    evaluate_files,
    fuse_stage,
    load_config,
    load_inputs,
    run_ablation,
    run_language,
    run_pipeline,
    score_pairs,
)
from .vcm import vcm_batch

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CLIENT = 0, 1, 2, 3

log = logging.getLogger("msfuse")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="pipeline config JSON")
    g.add_argument("--cache-dir", help="response cache directory")
    g.add_argument("--client", choices=["mock", "http"], help="chat client (default from config: mock)")
    g.add_argument("--seed", type=int, help="mock client seed")
    g.add_argument("--max-inflight", type=int, help="max concurrent client requests")
    g.add_argument("--post-nms", action="store_true", default=None, help="suppress duplicate fused boxes (IoU 0.5)")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _inputs(p: argparse.ArgumentParser, images: bool = True) -> None:
    p.add_argument("--rgb", required=True, help="RGB detection file")
    p.add_argument("--thermal", required=True, help="thermal detection file")
    if images:
        p.add_argument("--images-root", required=True, help="directory the manifest image paths are relative to")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="msfuse", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"msfuse {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pair", parents=[common], help="pair RGB and thermal detections")
    _inputs(p, images=False)
    p.add_argument("--out", required=True)

    p = sub.add_parser("vcm", parents=[common], help="write marked crops for every pair")
    _inputs(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("describe", parents=[common], help="pair + crop + describe; writes a stage file")
    _inputs(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mscot", parents=[common], help="score described pairs; updates a stage file")
    p.add_argument("--stage", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fuse", parents=[common], help="fuse a stage file into final detections")
    p.add_argument("--stage", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="drop fused detections below this score")

    p = sub.add_parser("eval", parents=[common], help="AP / log-average MR of fused detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--json-out")

    p = sub.add_parser("ablate", parents=[common], help="evaluate a grid of fusion strategies")
    _inputs(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--grid", choices=["score", "box", "both", "default"], default="both")
    p.add_argument("--json-out")

    p = sub.add_parser("run", parents=[common], help="end-to-end pipeline")
    _inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--gt", help="also evaluate against this ground truth")
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("synth", parents=[common], help="write a small synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--images", type=int, default=5)
    return parser


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.client:
        cfg.client["kind"] = args.client
    if args.seed is not None:
        cfg.client["seed"] = args.seed
    if args.max_inflight is not None:
        cfg.max_inflight = args.max_inflight
    if args.post_nms:
        cfg.post_nms = True
    if getattr(args, "threshold", None) is not None:
        cfg.score_threshold = args.threshold
    return cfg


def _print_json(obj) -> None:
    sys.stdout.write(canonical_dumps(obj))


def cmd_pair(args, cfg):
    inputs = load_inputs(args.rgb, args.thermal, ".")
    images = [StageImage(r.image_id, dpair(inputs.rgb_by_image.get(r.image_id, []),
                                           inputs.thermal_by_image.get(r.image_id, []), cfg.pairing))
              for r in inputs.manifest]
    save_stage(args.out, images, inputs.manifest)
    print(f"{sum(len(i.pairs) for i in images)} pairs over {len(images)} images -> {args.out}")


def cmd_vcm(args, cfg):
    inputs = load_inputs(args.rgb, args.thermal, args.images_root)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for rec in inputs.manifest:
        pairs = dpair(inputs.rgb_by_image.get(rec.image_id, []),
                      inputs.thermal_by_image.get(rec.image_id, []), cfg.pairing)
        if not pairs:
            continue
        for modality, rel in ((Modality.RGB, rec.path_rgb), (Modality.THERMAL, rec.path_thermal)):
            image = load_image(inputs.images_root / rel)
            for crop in vcm_batch(image, pairs, modality):
                tag = "rgb" if modality is Modality.RGB else "thermal"
                save_png(crop.image, out / f"{rec.image_id}_p{crop.pair_index:03d}_{tag}.png")
                n += 1
    print(f"{n} crops -> {out}")


def cmd_describe(args, cfg):
    inputs = load_inputs(args.rgb, args.thermal, args.images_root)
    client, base = _client_for(cfg, args.cache_dir, None)
    results = run_language(inputs, cfg, client, with_mscot=False)
    save_stage(args.out, [r.stage for r in results], inputs.manifest)
    print(f"described {sum(len(r.stage.pairs) for r in results)} pairs -> {args.out}")


def cmd_mscot(args, cfg):
    images, manifest = load_stage(args.stage)
    client, base = _client_for(cfg, args.cache_dir, None)
    n_fail = 0
    for im in images:
        if im.descriptions is None:
            raise SchemaError(args.stage, f"image {im.image_id} has no descriptions; run `describe` first")
        items = [None if d is None else (Description(d[0], Modality.RGB, i, im.image_id),
                                         Description(d[1], Modality.THERMAL, i, im.image_id))
                 for i, d in enumerate(im.descriptions)]
        im.mscot, failures = score_pairs(im.image_id, items, cfg, client)
        n_fail += len(failures)
        for f in failures:
            log.warning("language branch fallback: %s", f)
    save_stage(args.out, images, manifest)
    print(f"scored {sum(len(i.pairs) for i in images)} pairs ({n_fail} fallbacks) -> {args.out}")


def cmd_fuse(args, cfg):
    images, _ = load_stage(args.stage)
    fused = [d for im in images for d in fuse_stage(im, cfg)]
    save_fused(args.out, fused)
    print(f"{len(fused)} fused detections -> {args.out}")


def cmd_eval(args, cfg):
    report = evaluate_files(args.detections, args.gt, iou_thr=args.iou)
    print(format_table([("fused", report)]))
    if args.json_out:
        write_json(args.json_out, report.to_dict())


def cmd_ablate(args, cfg):
    grid = {"score": score_grid(), "box": box_grid(), "both": score_grid() + box_grid(),
            "default": [cfg.fusion]}[args.grid]
    result = run_ablation(args.rgb, args.thermal, args.images_root, args.gt, grid,
                          config=cfg, cache_dir=args.cache_dir)
    print(result.table())
    print(f"client calls: {json.dumps(result.client_calls, sort_keys=True)}")
    if args.json_out:
        write_json(args.json_out, result.to_dict())


def cmd_run(args, cfg):
    manifest = run_pipeline(args.rgb, args.thermal, args.images_root, out_path=args.out,
                            config=cfg, cache_dir=args.cache_dir)
    print(f"{manifest.images} images, {manifest.pairs} pairs, {manifest.fallbacks} fallbacks, "
          f"{manifest.total_client_calls} client calls -> {args.out}")
    if args.gt:
        print(format_table([("fused", evaluate_files(args.out, args.gt))]))


def cmd_synth(args, cfg):
    from .synthetic import make_dataset

    paths = make_dataset(args.out_dir, n_images=args.images, seed=args.seed if args.seed is not None else 7)
    _print_json({k: str(v) for k, v in paths.items()})


COMMANDS = {"pair": cmd_pair, "vcm": cmd_vcm, "describe": cmd_describe, "mscot": cmd_mscot,
            "fuse": cmd_fuse, "eval": cmd_eval, "ablate": cmd_ablate, "run": cmd_run, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except TransportError as exc:
        print(f"error: chat client failed: {exc}", file=sys.stderr)
        return EXIT_CLIENT
    except (SchemaError, FileNotFoundError, IsADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
