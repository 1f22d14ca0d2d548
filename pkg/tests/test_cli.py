"""Command-line pipeline: config plumbing, subcommands, exit codes, files."""

import csv
import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from videosum.cli import (
    DEFAULT_CONFIG,
    REPORT_SCHEMA,
    apply_overrides,
    load_config,
    main,
)
from videosum.data import load_dataset
from videosum.knapsack import kp_multiplicity_study, study_rows_to_csv

TINY_MODEL = [
    "--train.model.d_in", "4", "--train.model.d_model", "16",
    "--train.model.l_enc", "1", "--train.model.l_dec", "1",
    "--train.model.codebook_bins", "32", "--train.model.heads", "2",
]


def _synth(out, num_videos=2, frames=24, annotators=2, modes=1, dim=4, seed=0):
    rc = main([
        "synth", "--out", str(out), "--seed", str(seed),
        "--synth.num_videos", str(num_videos),
        "--synth.frames_per_video", str(frames),
        "--synth.num_annotators", str(annotators),
        "--synth.num_modes", str(modes),
        "--synth.feature_dim", str(dim),
    ])
    assert rc == 0
    return out / "dataset.json"


def _train(out, dataset, epochs=3, extra=()):
    rc = main([
        "train", "--out", str(out),
        "--train.dataset", str(dataset),
        *TINY_MODEL,
        "--train.epochs", str(epochs),
        "--train.batch_size", "4",
        "--train.t_train", "50",
        "--train.learning_rate", "3e-3",
        "--train.ema_decay", "0.9",
        *extra,
    ])
    assert rc == 0
    return out / "checkpoint.json"


# ---------------------------------------------------------------------------
# Config machinery
# ---------------------------------------------------------------------------

def test_load_config_defaults_and_merge(tmp_path):
    assert load_config(None) == DEFAULT_CONFIG
    doc = tmp_path / "c.json"
    doc.write_text(json.dumps({"synth": {"num_videos": 3}}))
    cfg = load_config(str(doc))
    assert cfg["synth"]["num_videos"] == 3
    assert cfg["synth"]["fps"] == DEFAULT_CONFIG["synth"]["fps"]
    doc.write_text(json.dumps({"bogus": {}}))
    with pytest.raises(ValueError, match="unknown config sections"):
        load_config(str(doc))
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.json"))


def test_apply_overrides():
    cfg = load_config(None)
    out = apply_overrides(cfg, [("train.model.d_model", "32"),
                                ("sample.sag_threshold", "null"),
                                ("sample.summarize", "true")])
    assert out["train"]["model"]["d_model"] == 32
    assert out["sample"]["sag_threshold"] is None
    assert out["sample"]["summarize"] is True
    assert cfg["train"]["model"]["d_model"] == 64  # input untouched
    with pytest.raises(ValueError, match="unknown config key"):
        apply_overrides(cfg, [("train.nope", "1")])
    with pytest.raises(ValueError, match="section, not a value"):
        apply_overrides(cfg, [("train.model", "1")])


def test_defaults_match_documented_values():
    cfg = load_config(None)
    assert cfg["train"]["model"]["logit_eps"] == 1e-3
    assert cfg["sample"]["num_steps"] == 10
    assert cfg["sample"]["num_samples"] == 100
    assert cfg["train"]["batch_size"] == 256
    assert cfg["kp_study"]["k_values"] == [4, 16, 64, 256, 1024]


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def test_synth_round_trip_and_modes(tmp_path):
    path = _synth(tmp_path / "a", num_videos=3, annotators=4, modes=2)
    records = load_dataset(path)
    assert len(records) == 3
    assert records[0].num_annotators == 4
    modes = json.loads((tmp_path / "a" / "modes.json").read_text())
    assert modes["assignment"] == [0, 1, 0, 1]
    assert set(modes["templates"]) == {r.id for r in records}


def test_synth_is_byte_deterministic(tmp_path):
    p1 = _synth(tmp_path / "a", seed=7)
    p2 = _synth(tmp_path / "b", seed=7)
    assert p1.read_bytes() == p2.read_bytes()
    assert (tmp_path / "a" / "modes.json").read_bytes() == \
        (tmp_path / "b" / "modes.json").read_bytes()
    p3 = _synth(tmp_path / "c", seed=8)
    assert p1.read_bytes() != p3.read_bytes()


def test_synth_rejects_bad_config(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path), "--synth.num_videos", "0"])
    assert rc == 2
    assert "num_videos" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_missing_dataset_exits_2(tmp_path, capsys):
    rc = main(["train", "--out", str(tmp_path),
               "--train.dataset", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "no such file" in capsys.readouterr().err


def test_train_requires_dataset_key(tmp_path, capsys):
    rc = main(["train", "--out", str(tmp_path)])
    assert rc == 2
    assert "train.dataset" in capsys.readouterr().err


def test_train_overfits_single_video(tmp_path):
    dataset = _synth(tmp_path, num_videos=1, annotators=1)
    _train(tmp_path, dataset, epochs=60,
           extra=["--train.cond_dropout_prob", "0.0"])
    rows = list(csv.DictReader(open(tmp_path / "training_log.csv")))
    assert len(rows) == 60
    first, last = float(rows[0]["loss"]), float(rows[-1]["loss"])
    assert last < 0.1 * first


def test_train_resume_is_deterministic(tmp_path):
    dataset = _synth(tmp_path, num_videos=1, annotators=2)
    base = _train(tmp_path / "base", dataset, epochs=2)
    cont = []
    for sub in ("c1", "c2"):
        ckpt = _train(tmp_path / sub, dataset, epochs=2,
                      extra=["--train.init_checkpoint", str(base),
                             "--seed", "5"])
        cont.append(ckpt.read_bytes())
    assert cont[0] == cont[1]
    assert cont[0] != base.read_bytes()


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    dataset = _synth(root, num_videos=2, annotators=2)
    ckpt = _train(root, dataset, epochs=3)
    return root, dataset, ckpt


def _sample(out, dataset, ckpt, extra=()):
    rc = main([
        "sample", "--out", str(out),
        "--sample.dataset", str(dataset),
        "--sample.checkpoint", str(ckpt),
        "--sample.num_samples", "4",
        "--sample.num_steps", "4",
        "--sample.t_train", "50",
        *extra,
    ])
    assert rc == 0
    return out / "samples.json"


def test_sample_outputs_valid_scores(trained_run, tmp_path):
    root, dataset, ckpt = trained_run
    doc = json.loads(_sample(tmp_path, dataset, ckpt).read_text())
    assert doc["version"] == 1
    assert len(doc["videos"]) == 2
    for entry in doc["videos"]:
        arr = np.asarray(entry["samples"])
        assert arr.shape == (4, 24)
        assert ((arr > 0) & (arr < 1)).all()
        assert "summaries" not in entry


def test_sample_is_byte_deterministic(trained_run, tmp_path):
    root, dataset, ckpt = trained_run
    p1 = _sample(tmp_path / "s1", dataset, ckpt)
    p2 = _sample(tmp_path / "s2", dataset, ckpt)
    assert p1.read_bytes() == p2.read_bytes()
    p3 = _sample(tmp_path / "s3", dataset, ckpt, extra=["--seed", "3"])
    assert p1.read_bytes() != p3.read_bytes()


def test_sample_summarize_flag(trained_run, tmp_path):
    root, dataset, ckpt = trained_run
    path = _sample(tmp_path, dataset, ckpt,
                   extra=["--summarize", "--sample.rho", "0.3",
                          "--sample.max_segments", "4"])
    doc = json.loads(path.read_text())
    for entry in doc["videos"]:
        summaries = np.asarray(entry["summaries"])
        assert summaries.shape == (4, 24)
        assert set(np.unique(summaries)) <= {0, 1}
        # budget: at most floor(0.3 * 24) = 7 frames per summary
        assert (summaries.sum(axis=1) <= 7).all()


def test_sample_missing_checkpoint_exits_2(trained_run, tmp_path, capsys):
    root, dataset, _ = trained_run
    rc = main(["sample", "--out", str(tmp_path),
               "--sample.dataset", str(dataset),
               "--sample.checkpoint", str(tmp_path / "nope.json")])
    assert rc == 2


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def _write_self_samples(dataset_path, out_path):
    """A samples file whose samples are exactly the annotations."""
    records = load_dataset(dataset_path)
    doc = {
        "version": 1,
        "sampler": {},
        "videos": [
            {
                "id": rec.id,
                "fps": rec.fps,
                "samples": [a.values.tolist() for a in rec.annotations],
            }
            for rec in records
        ],
    }
    out_path.write_text(json.dumps(doc))
    return out_path


def test_evaluate_self_is_perfect(tmp_path):
    dataset = _synth(tmp_path, num_videos=3, frames=30, annotators=3, modes=3,
                     dim=4)
    samples = _write_self_samples(dataset, tmp_path / "self.json")
    rc = main(["evaluate", "--out", str(tmp_path / "ev"),
               "--evaluate.dataset", str(dataset),
               "--evaluate.samples", str(samples),
               "--evaluate.rho", "0.3",
               "--evaluate.max_segments", "5",
               "--evaluate.penalty_coeff", "0.1"])
    assert rc == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    for vid, metrics in report["per_video"].items():
        assert metrics["tau"] == pytest.approx(1.0)
        assert metrics["rho"] == pytest.approx(1.0)
        assert metrics["cis"] <= 0.0
        assert metrics["wir"] == pytest.approx(1.0)
        assert metrics["wse"] == pytest.approx(0.0)
        assert metrics["f1"] == pytest.approx(1.0)
    assert report["aggregate"]["tau"]["mean"] == pytest.approx(1.0)
    assert report["aggregate"]["tau"]["std"] == pytest.approx(0.0)

    coverage = (tmp_path / "ev" / "coverage.csv").read_text().splitlines()
    assert coverage[0] == "video_id,annotator_0,annotator_1,annotator_2"
    assert len(coverage) == 4
    # every annotation matches itself, so every row covers every annotator
    for line in coverage[1:]:
        vals = [float(x) for x in line.split(",")[1:]]
        assert all(0.0 <= v <= 1.0 for v in vals)
        assert all(v > 0 for v in vals)

    projection = (tmp_path / "ev" / "projection.csv").read_text().splitlines()
    assert projection[0] == "kind,video_id,index,pc1,pc2"
    # 3 videos x 3 annotations + 3 videos x 3 "generated" samples
    assert len(projection) == 1 + 9 + 9
    kinds = {line.split(",")[0] for line in projection[1:]}
    assert kinds == {"annotation", "generated"}


def test_evaluate_full_pipeline_report(trained_run, tmp_path):
    root, dataset, ckpt = trained_run
    samples = _sample(tmp_path, dataset, ckpt)
    rc = main(["evaluate", "--out", str(tmp_path / "ev"),
               "--evaluate.dataset", str(dataset),
               "--evaluate.samples", str(samples),
               "--evaluate.rho", "0.3",
               "--evaluate.max_segments", "4"])
    assert rc == 0
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    jsonschema.validate(report, REPORT_SCHEMA)
    assert set(report["per_video"]) == {"synth-000", "synth-001"}
    for metrics in report["per_video"].values():
        assert -1.0 <= metrics["tau"] <= 1.0
        assert 0.0 <= metrics["wir"] <= 1.0
        assert metrics["wse"] >= 0.0


def test_evaluate_unknown_video_exits_2(tmp_path, capsys):
    dataset = _synth(tmp_path, num_videos=1)
    bad = {"version": 1, "videos": [{"id": "ghost", "fps": 2.0,
                                     "samples": [[0.5] * 24]}]}
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad))
    rc = main(["evaluate", "--out", str(tmp_path / "ev"),
               "--evaluate.dataset", str(dataset),
               "--evaluate.samples", str(bad_path)])
    assert rc == 2
    assert "ghost" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# kp-study
# ---------------------------------------------------------------------------

def test_kp_study_matches_library(tmp_path):
    rc = main(["kp-study", "--out", str(tmp_path), "--seed", "11",
               "--kp_study.trials", "8", "--kp_study.num_items", "6",
               "--kp_study.k_values", "[4,16]"])
    assert rc == 0
    expected = study_rows_to_csv(
        kp_multiplicity_study(N_items=6, K_list=(4, 16), trials=8, rho=0.15,
                              weight_dist=(1, 10), seed=11)
    )
    assert (tmp_path / "kp_study.csv").read_text() == expected


# ---------------------------------------------------------------------------
# entry-point behavior
# ---------------------------------------------------------------------------

def test_unknown_override_exits_2(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path), "--synth.bogus", "1"])
    assert rc == 2
    assert "unknown config key" in capsys.readouterr().err


def test_stray_positional_exits_2(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path), "stray"])
    assert rc == 2


def test_module_invocation():
    proc = subprocess.run(
        [sys.executable, "-m", "videosum", "kp-study", "--out", "/tmp",
         "--kp_study.trials", "0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "trials" in proc.stderr
