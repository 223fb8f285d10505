import json
import subprocess
import sys

import numpy as np
import pytest

from ecrseg.cli import build_parser, main
from ecrseg.evaluation import load_manifest
from ecrseg.volume import read_mask, read_volume

from conftest import SMALL

SUBCOMMANDS = [
    "preprocess",
    "features",
    "histograms",
    "train",
    "predict",
    "postprocess",
    "evaluate",
    "stratify",
    "stratify-apply",
    "phantom",
    "pipeline",
]


@pytest.fixture(scope="module")
def case(small_cohort):
    return load_manifest(small_cohort)[0]


def _run(*argv):
    return main([str(a) for a in argv])


def test_every_subcommand_has_help_with_defaults(capsys):
    parser = build_parser()
    for name in SUBCOMMANDS:
        with pytest.raises(SystemExit) as exc:
            parser.parse_args([name, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "--threads" in text
    with pytest.raises(SystemExit):
        parser.parse_args(["features", "--help"])
    text = capsys.readouterr().out
    assert "(default: 5)" in text and "(default: 16)" in text and "(default: lgre,hgre)" in text


def test_threads_before_or_after_the_subcommand():
    parser = build_parser()
    assert parser.parse_args(["--threads", "3", "postprocess", "--in", "a", "--out", "b"]).threads == 3
    assert parser.parse_args(["postprocess", "--threads", "2", "--in", "a", "--out", "b"]).threads == 2
    assert parser.parse_args(["postprocess", "--in", "a", "--out", "b"]).threads is None


def test_stage_by_stage_chain(tmp_path, small_cohort, case, capsys):
    pre = tmp_path / "pre.nrrd"
    assert _run("preprocess", "--in", case.scan, "--out", pre) == 0
    assert read_volume(pre).data.min() >= 0.0 and read_volume(pre).data.max() <= 1.0

    maps = tmp_path / "maps"
    assert _run("features", "--in", pre, "--mask", case.tooth, "--radius", 2, "--out-dir", maps) == 0
    assert sorted(p.name for p in maps.iterdir()) == ["hgre.nrrd", "lgre.nrrd"]

    hist = tmp_path / "hist.json"
    assert _run("histograms", "--maps", maps, "--tooth", case.tooth, "--lesion", case.lesion, "--out", hist) == 0
    assert set(json.loads(hist.read_text())) == {"lgre", "hgre"}

    model = tmp_path / "model.json"
    assert _run("train", "--cases", small_cohort, "--radius", 2, "--out", model) == 0
    doc = json.loads(model.read_text())
    assert doc["feature_names"] == ["lgre", "hgre"] and doc["params"]["radius"] == 2

    raw = tmp_path / "raw.nrrd"
    assert _run("predict", "--model", model, "--maps", maps, "--tooth", case.tooth, "--out", raw) == 0
    raw_mask = read_mask(raw)
    assert not np.any(raw_mask.data & ~read_mask(case.tooth).data)

    post = tmp_path / "post.nrrd"
    capsys.readouterr()
    assert _run("postprocess", "--in", raw, "--out", post) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["voxels"] == read_mask(post).count

    centers = tmp_path / "centers.json"
    labels = tmp_path / "labels.nrrd"
    rep = tmp_path / "strat.json"
    assert _run("stratify", "--lesion", case.lesion, "--scan", pre, "--radius", 2, "--save-centers", centers,
                "--labels-out", labels, "--report", rep) == 0
    stats = json.loads(rep.read_text())
    assert len(stats["centers"]) == 2
    lab = read_volume(labels).data
    lesion = read_mask(case.lesion).data
    assert set(np.unique(lab[lesion])) == {1.0, 2.0} and not lab[~lesion].any()

    rep2 = tmp_path / "apply.json"
    assert _run("stratify-apply", "--centers", centers, "--lesion", case.lesion, "--scan", pre, "--radius", 2,
                "--report", rep2) == 0
    assert json.loads(rep2.read_text())["centers"] == stats["centers"]
    assert _run("stratify", "--lesion", case.lesion, "--maps", maps, "--report", tmp_path / "s2.json") == 0


def test_evaluate_writes_report_and_table(tmp_path, small_cohort, capsys):
    rep = tmp_path / "r.json"
    table = tmp_path / "t.txt"
    assert _run("evaluate", "--manifest", small_cohort, "--radii", "2", "--report", rep, "--table", table) == 0
    out = capsys.readouterr().out
    assert "Neighborhood Radius" in out
    doc = json.loads(rep.read_text())
    assert len(doc["cases"]) == 6 and len(doc["folds"]) == 3
    assert table.read_text().strip() == out.strip()


def test_phantom_single_and_cohort(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(SMALL.to_dict()))
    assert _run("phantom", "--spec", spec, "--out-dir", tmp_path / "one") == 0
    assert {p.name for p in (tmp_path / "one").iterdir()} == {"scan.nrrd", "tooth.nrrd", "lesion.nrrd", "spec.json"}
    capsys.readouterr()
    assert _run("phantom", "--spec", spec, "--cohort", 2, "--out-dir", tmp_path / "c") == 0
    assert capsys.readouterr().out.strip().endswith("manifest.json")
    assert len(load_manifest(tmp_path / "c" / "manifest.json")) == 4


def test_pipeline_with_bundled_model(tmp_path, default_case, capsys):
    out = tmp_path / "run"
    code = _run("pipeline", "--scan", default_case["scan"], "--tooth", default_case["tooth"],
                "--lesion", default_case["lesion"], "--out-dir", out, "--stratify")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["model_source"] == "bundled"
    assert summary["metrics"]["dsc"] > 0.7
    assert summary["predicted_volume_mm3"] > 0.0 and summary["metrics"]["truth_volume_mm3"] > 0.0
    assert {"load", "preprocess", "model", "features", "predict", "postprocess", "metrics", "stratify"} <= set(
        summary["runtime"]["timings_s"]
    )
    assert len(summary["clusters"]) == 2
    for name in ("pre.nrrd", "raw_pred.nrrd", "pred.nrrd", "model.json", "centers.json", "cluster_labels.nrrd"):
        assert (out / name).exists()
    assert list(out.glob("*.png"))
    printed = json.loads(capsys.readouterr().out)
    assert printed["metrics"] == summary["metrics"]


def test_pipeline_rerun_is_byte_identical(tmp_path, small_cohort, case):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "scan": case.scan, "tooth": case.tooth, "lesion": case.lesion, "train_manifest": str(small_cohort),
        "radius": 2, "stratify": True, "overlays": False,
    }))
    for name in ("a", "b"):
        assert _run("pipeline", "--config", cfg, "--out-dir", tmp_path / name) == 0
    assert read_mask(tmp_path / "a" / "pred.nrrd").count > 0
    for name in ("pred.nrrd", "raw_pred.nrrd", "model.json", "pre.nrrd", "centers.json", "cluster_labels.nrrd"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sa, sb = (json.loads((tmp_path / n / "summary.json").read_text()) for n in ("a", "b"))
    sa.pop("runtime"), sb.pop("runtime")
    sa["config"].pop("out_dir"), sb["config"].pop("out_dir")
    assert sa == sb


def test_stratify_skips_an_empty_prediction(tmp_path, case, caplog):
    # the bundled radius-5 model finds nothing in the small phantom
    assert _run("pipeline", "--scan", case.scan, "--tooth", case.tooth, "--out-dir", tmp_path, "--stratify",
                "--no-overlays") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["predicted_voxels"] == 0 and summary["clusters"] == []
    assert "stratify skipped" in caplog.text


def test_exit_codes(tmp_path, case, capsys):
    assert _run("pipeline", "--scan", case.scan, "--out-dir", tmp_path) == 2
    assert "error [config]" in capsys.readouterr().err
    assert _run("pipeline", "--scan", case.scan, "--tooth", tmp_path / "nope.nrrd", "--out-dir", tmp_path) == 2
    assert "tooth mask not found" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scan": case.scan, "tooth": case.tooth, "colour": "red"}))
    assert _run("pipeline", "--config", bad) == 2
    # geometry clash between scan and tooth fails inside the load stage
    other = tmp_path / "other"
    assert _run("phantom", "--spec", _tiny_spec(tmp_path), "--out-dir", other) == 0
    assert _run("pipeline", "--scan", case.scan, "--tooth", other / "tooth.nrrd", "--out-dir", tmp_path / "x") == 3
    assert "error [load]" in capsys.readouterr().err
    assert _run("preprocess", "--in", tmp_path / "missing.nrrd", "--out", tmp_path / "o.nrrd") == 3
    assert _run("preprocess", "--in", case.scan, "--out", tmp_path / "o.nrrd", "--lo", 90, "--hi", 10) == 2


def _tiny_spec(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"dims": [12, 12, 12], "tooth_center": [6, 6, 6], "tooth_radii": [5, 5, 5],
                                "lesion_center": [6, 6, 6], "lesion_radius": 2}))
    return path


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "ecrseg.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in SUBCOMMANDS:
        assert name in res.stdout
