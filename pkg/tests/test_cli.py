import json

import pytest

from msfuse.cli import EXIT_CLIENT, EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from msfuse.io import load_fused, load_stage


def args(golden_dir, *extra):
    return ["--rgb", str(golden_dir / "det_rgb.json"), "--thermal", str(golden_dir / "det_thermal.json"),
            "--images-root", str(golden_dir), *extra]


def test_run_matches_golden(golden_dir, tmp_path, capsys):
    out = tmp_path / "fused.json"
    assert main(["run", *args(golden_dir, "--out", str(out), "--seed", "7", "--gt", str(golden_dir / "gt.json"))]) == 0
    assert out.read_bytes() == (golden_dir / "expected_fused.json").read_bytes()
    assert "AP All" in capsys.readouterr().out


def test_staged_commands_equal_run(golden_dir, tmp_path):
    cache = ["--cache-dir", str(tmp_path / "cache"), "--seed", "7"]
    stage = tmp_path / "stage.json"
    assert main(["describe", *args(golden_dir, "--out", str(stage)), *cache]) == EXIT_OK
    assert main(["mscot", "--stage", str(stage), "--out", str(tmp_path / "scored.json"), *cache]) == EXIT_OK
    images, _ = load_stage(tmp_path / "scored.json")
    assert all(im.mscot is not None for im in images)
    assert main(["fuse", "--stage", str(tmp_path / "scored.json"), "--out", str(tmp_path / "f.json")]) == EXIT_OK
    assert (tmp_path / "f.json").read_bytes() == (golden_dir / "expected_fused.json").read_bytes()


def test_pair_and_vcm(golden_dir, tmp_path):
    rgb, th = str(golden_dir / "det_rgb.json"), str(golden_dir / "det_thermal.json")
    assert main(["pair", "--rgb", rgb, "--thermal", th, "--out", str(tmp_path / "p.json")]) == EXIT_OK
    n_pairs = sum(len(im.pairs) for im in load_stage(tmp_path / "p.json")[0])
    assert main(["vcm", *args(golden_dir, "--out-dir", str(tmp_path / "crops"))]) == EXIT_OK
    assert len(list((tmp_path / "crops").glob("*.png"))) == 2 * n_pairs


def test_eval_and_ablate(golden_dir, tmp_path, capsys):
    gt = str(golden_dir / "gt.json")
    assert main(["eval", "--detections", str(golden_dir / "expected_fused.json"), "--gt", gt,
                 "--json-out", str(tmp_path / "r.json")]) == EXIT_OK
    assert set(json.loads((tmp_path / "r.json").read_text())) >= {"ap_all", "mr_day", "mr_night", "mr_all"}
    assert main(["ablate", *args(golden_dir, "--gt", gt, "--grid", "score", "--seed", "7")]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("score V=") == 4


def test_post_nms_and_threshold(golden_dir, tmp_path):
    out = tmp_path / "f.json"
    assert main(["run", *args(golden_dir, "--out", str(out), "--seed", "7", "--post-nms", "--threshold", "0.5")]) == 0
    dets = load_fused(out)
    assert all(d.score >= 0.5 for d in dets)


def test_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE


def test_input_errors(golden_dir, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": "1.0", "modality": "RGB", "image_manifest": [],
                               "entries": [{"image_id": "x", "box": [0, 0, 1, 1], "score": 2}]}))
    code = main(["run", "--rgb", str(bad), "--thermal", str(golden_dir / "det_thermal.json"),
                 "--images-root", str(golden_dir), "--out", str(tmp_path / "o.json")])
    assert code == EXIT_INPUT
    assert main(["eval", "--detections", str(tmp_path / "missing.json"), "--gt", str(bad)]) == EXIT_INPUT
    assert "error:" in capsys.readouterr().err


def test_client_failure_exit_code(golden_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"client": {"kind": "http", "endpoint": "http://127.0.0.1:9/none", "timeout": 0.2}}))
    code = main(["run", *args(golden_dir, "--out", str(tmp_path / "o.json"), "--config", str(cfg))])
    assert code == EXIT_CLIENT


def test_synth(tmp_path, capsys):
    assert main(["synth", "--out-dir", str(tmp_path / "s"), "--images", "2"]) == EXIT_OK
    assert (tmp_path / "s" / "gt.json").exists()
