import dataclasses
import json
import subprocess
import sys

import numpy as np
import pytest

from poe_supcon.cli import main
from poe_supcon.dataset import load_dataset
from poe_supcon.evaluation import report_from_json
from poe_supcon.training import ExperimentConfig

SMALL_SYNTH = {
    "n_participants": 16, "n_mci": 8, "n_english": 8, "n_english_mci": 4,
    "dims": {"speech": 6, "acoustic": 4, "text": 6, "image": 5}, "seed": 1,
}
SMALL_TRAIN = {
    "k_folds": 2, "epochs": 1, "lr": 1e-3, "batch_size": 8,
    "hidden": 8, "proj_dim": 4, "modalities": ["speech", "text"], "seed": 2,
}


@pytest.fixture
def synth_dir(tmp_path):
    cfg = tmp_path / "synth.json"
    cfg.write_text(json.dumps(SMALL_SYNTH))
    out = tmp_path / "data"
    assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def train_cfg_file(tmp_path, **overrides):
    cfg = dict(SMALL_TRAIN)
    cfg.update(overrides)
    path = tmp_path / "train.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSynth:
    def test_default_config_prints_corpus_totals(self, tmp_path, capsys):
        cfg = tmp_path / "synth.json"
        # default sizes, small dims to keep the files tiny
        cfg.write_text(json.dumps({"dims": {"text": 4}}))
        out = tmp_path / "full"
        assert main(["synth", "--config", str(cfg), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "samples: 387" in stdout
        assert "MCI=222" in stdout and "NC=165" in stdout
        ds = load_dataset(out / "manifest.json")
        assert len(ds) == 387

    def test_same_seed_identical_files(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps(SMALL_SYNTH))
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["synth", "--config", str(cfg), "--out", str(a), "--seed", "7"]) == 0
        assert main(["synth", "--config", str(cfg), "--out", str(b), "--seed", "7"]) == 0
        for name in ("manifest.json", "speech.mceb", "text.mceb"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_zero_noise_rejected(self, tmp_path, capsys):
        code = main(["synth", "--out", str(tmp_path / "x"), "--noise_std", "0"])
        assert code == 2
        assert "noise_std" in capsys.readouterr().err

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "synth.json"
        cfg.write_text(json.dumps(SMALL_SYNTH))
        out = tmp_path / "o"
        assert main(["synth", "--config", str(cfg), "--out", str(out),
                     "--n_participants", "20", "--n_mci", "10",
                     "--n_english", "10", "--n_english_mci", "5"]) == 0
        assert len(load_dataset(out / "manifest.json")) == 60


class TestTrain:
    def test_writes_report_and_checkpoints(self, tmp_path, synth_dir):
        cfg = train_cfg_file(tmp_path)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out), "--jobs", "1"]) == 0
        report = report_from_json((out / "report.json").read_text())
        assert len(report.folds) == 2
        assert (out / "report.csv").exists()
        assert (out / "folds_uar.tsv").exists()
        assert (out / "checkpoints" / "fold_0.bin").exists()
        assert (out / "checkpoints" / "fold_1.json").exists()

    def test_missing_manifest_exits_2(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "out")])
        assert code == 2
        assert "manifest not found" in capsys.readouterr().err

    def test_byte_identical_reports(self, tmp_path, synth_dir):
        cfg = train_cfg_file(tmp_path)
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["train", "--config", str(cfg), "--data", str(synth_dir),
                         "--out", str(out), "--jobs", "1", "--no-checkpoints"]) == 0
            outs.append((out / "report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_full_framework_flags(self, tmp_path, synth_dir):
        cfg = train_cfg_file(tmp_path)
        out = tmp_path / "full"
        assert main(["train", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out), "--fusion", "poe", "--use_cl",
                     "--use_image", "--jobs", "1", "--no-checkpoints"]) == 0
        report = report_from_json((out / "report.json").read_text())
        assert report.config["fusion"] == "poe"
        assert report.config["use_cl"] is True
        assert report.config["use_image"] is True

    def test_jobs_env_var_and_parallel_checkpoints(self, tmp_path, synth_dir, monkeypatch):
        monkeypatch.setenv("POE_SUPCON_JOBS", "2")
        cfg = train_cfg_file(tmp_path)
        out = tmp_path / "env"
        assert main(["train", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        # checkpoints written from parallel fold workers
        assert (out / "checkpoints" / "fold_0.bin").exists()
        assert (out / "checkpoints" / "fold_1.bin").exists()


class TestEval:
    def test_summarizes_report(self, tmp_path, synth_dir, capsys):
        cfg = train_cfg_file(tmp_path)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out), "--jobs", "1", "--no-checkpoints"]) == 0
        capsys.readouterr()
        csv_out = tmp_path / "flat.csv"
        assert main(["eval", "--report", str(out / "report.json"),
                     "--csv", str(csv_out)]) == 0
        stdout = capsys.readouterr().out
        assert "subgroup" in stdout
        assert "disparity" in stdout
        assert csv_out.exists()


class TestAblate:
    def test_grid_csv_with_deltas(self, tmp_path, synth_dir, capsys):
        cfg = train_cfg_file(tmp_path, modalities=["speech", "acoustic", "text"])
        out = tmp_path / "grid"
        assert main(["ablate", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out), "--jobs", "1"]) == 0
        lines = (out / "ablate.csv").read_text().strip().splitlines()
        assert lines[0].split(",") == ["config", "subgroup", "uar", "f1",
                                       "delta_uar", "delta_f1"]
        assert len(lines) == 1 + 8 * 5
        baseline_rows = [l for l in lines[1:] if l.startswith("concat/-CL/-IE")]
        for row in baseline_rows:
            cells = row.split(",")
            if cells[2] != "n/a":
                assert float(cells[4]) == 0.0  # delta vs itself
        assert len([p for p in out.glob("report_*.json")]) == 8

    def test_single_modality_grid_notes_degeneracy(self, tmp_path, synth_dir, capsys):
        cfg = train_cfg_file(tmp_path, modalities=["text"])
        out = tmp_path / "grid1"
        assert main(["ablate", "--config", str(cfg), "--data", str(synth_dir),
                     "--out", str(out), "--jobs", "1"]) == 0
        assert "poe and concat cells coincide" in capsys.readouterr().out


class TestGradcheck:
    def test_default_run_passes(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("pass") == 5
        assert "FAIL" not in out

    def test_fixed_seed_reproduces_table(self, capsys):
        assert main(["gradcheck", "--seed", "3", "--points", "2"]) == 0
        first = capsys.readouterr().out
        assert main(["gradcheck", "--seed", "3", "--points", "2"]) == 0
        assert capsys.readouterr().out == first

    def test_corrupted_gradient_fails(self, monkeypatch, capsys):
        monkeypatch.setenv("POE_SUPCON_CORRUPT_GRADCHECK", "1")
        assert main(["gradcheck", "--seed", "0", "--points", "1"]) == 1
        captured = capsys.readouterr()
        assert "FAIL" in captured.out


class TestConvert:
    def test_csv_to_containers(self, tmp_path, capsys):
        samples = tmp_path / "samples.csv"
        samples.write_text(
            "sample_id,participant_id,picture_id,language,gender,label\n"
            "a-p1,a,1,En,F,MCI\na-p2,a,2,En,F,MCI\na-p3,a,3,En,F,MCI\n")
        emb = tmp_path / "text.csv"
        emb.write_text("0.5,1.5\n-0.25,2.0\n0.0,0.125\n")
        out = tmp_path / "converted"
        assert main(["convert", "--samples", str(samples),
                     "--embedding", f"text={emb}", "--out", str(out)]) == 0
        ds = load_dataset(out / "manifest.json")
        assert len(ds) == 3
        assert np.array_equal(ds.feature_matrix("text")[0], [0.5, 1.5])

    def test_bad_embedding_spec(self, tmp_path, capsys):
        samples = tmp_path / "s.csv"
        samples.write_text("sample_id,participant_id,picture_id,language,gender,label\n")
        assert main(["convert", "--samples", str(samples),
                     "--embedding", "textonly", "--out", str(tmp_path / "o")]) == 2
        assert "name=path" in capsys.readouterr().err


class TestHelp:
    def test_train_help_lists_every_config_field(self):
        result = subprocess.run(
            [sys.executable, "-m", "poe_supcon", "train", "--help"],
            capture_output=True, text=True)
        assert result.returncode == 0
        for f in dataclasses.fields(ExperimentConfig):
            assert f"--{f.name}" in result.stdout

    def test_entry_point_reports_input_error_exit_code(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "poe_supcon", "train",
             "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")],
            capture_output=True, text=True)
        assert result.returncode == 2
        assert "manifest not found" in result.stderr
