"""End-to-end command-line behavior: outputs, determinism, exit codes."""

import json

import numpy as np
import pytest

from relprop import (
    SyntheticSpec,
    TrainConfig,
    generate_dataset,
    load_image_ppm,
    load_tensor_csv,
    save_dataset,
    save_image_pgm,
    save_model,
    train_toy,
)
from relprop.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Trained fixture model, a positive sample on disk, and a small dataset."""
    root = tmp_path_factory.mktemp("cli")
    samples = generate_dataset(SyntheticSpec(noise_level=0.1, sample_count=30, seed=0))
    model = train_toy(samples, TrainConfig(epochs=30, seed=0))
    model_path = root / "model.json"
    save_model(model, model_path)
    positive = next(s for s in samples if s.label == 1)
    input_path = root / "input.pgm"
    save_image_pgm(positive.image, input_path)
    data_dir = root / "data"
    save_dataset(samples[:10], data_dir)
    return {
        "root": root,
        "model": str(model_path),
        "input": str(input_path),
        "data": str(data_dir),
        "bbox": positive.bbox,
    }


class TestExplain:
    def test_writes_scores_and_heatmap_with_conservation(self, workspace, tmp_path, capsys):
        scores = tmp_path / "scores.csv"
        heatmap = tmp_path / "heat.ppm"
        code = main([
            "explain", "--model", workspace["model"], "--input", workspace["input"],
            "--rule", "zplus", "--target", "1",
            "--out-scores", str(scores), "--out-heatmap", str(heatmap),
        ])
        assert code == 0
        out = capsys.readouterr().out
        residual = float(out.split("conservation residual = ")[1].splitlines()[0])
        assert residual < 1e-9
        values = load_tensor_csv(scores)
        assert values.size == 64
        rgb = load_image_ppm(heatmap)
        assert rgb.shape == (8, 8, 3)

    def test_alpha_beta_validation_is_usage_error(self, workspace):
        code = main([
            "explain", "--model", workspace["model"], "--input", workspace["input"],
            "--rule", "alphabeta", "--alpha", "2", "--beta", "0.5", "--target", "1",
        ])
        assert code == 2

    def test_missing_model_is_data_error(self, workspace, tmp_path):
        code = main([
            "explain", "--model", str(tmp_path / "absent.json"),
            "--input", workspace["input"], "--target", "0",
        ])
        assert code == 3

    def test_byte_identical_outputs(self, workspace, tmp_path):
        outs = []
        for tag in ("a", "b"):
            scores = tmp_path / f"{tag}.csv"
            heat = tmp_path / f"{tag}.ppm"
            assert main([
                "explain", "--model", workspace["model"], "--input", workspace["input"],
                "--rule", "alphabeta", "--target", "1",
                "--out-scores", str(scores), "--out-heatmap", str(heat),
            ]) == 0
            outs.append((scores.read_bytes(), heat.read_bytes()))
        assert outs[0] == outs[1]

    def test_missing_subcommand_flags_exit_2(self, workspace):
        with pytest.raises(SystemExit) as err:
            main(["explain", "--model", workspace["model"]])
        assert err.value.code == 2


class TestEvaluate:
    def test_report_has_one_entry_per_method(self, workspace, tmp_path):
        out = tmp_path / "report.json"
        code = main([
            "evaluate", "--model", workspace["model"], "--data", workspace["data"],
            "--methods", "zplus,sensitivity,random", "--steps", "4", "--patch", "1",
            "--baseline", "zero", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert sorted(report["mean_aopc"]) == ["random", "sensitivity", "zplus"]
        csv_rows = (tmp_path / "report.csv").read_text().strip().splitlines()
        assert len(csv_rows) == 1 + 10 * 3

    def test_identical_seeds_identical_bytes(self, workspace, tmp_path):
        blobs = []
        for tag in ("x", "y"):
            out = tmp_path / f"{tag}.json"
            assert main([
                "evaluate", "--model", workspace["model"], "--data", workspace["data"],
                "--methods", "alphabeta(2,1),random", "--steps", "3", "--patch", "2",
                "--seed", "5", "--out", str(out),
            ]) == 0
            blobs.append(out.read_bytes() + out.with_suffix(".csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_missing_data_dir_exits_3(self, workspace, tmp_path):
        assert main([
            "evaluate", "--model", workspace["model"], "--data", str(tmp_path / "nope"),
            "--out", str(tmp_path / "r.json"),
        ]) == 3


class TestContext:
    def test_ratio_below_one_for_true_box(self, workspace, capsys):
        b = workspace["bbox"]
        code = main([
            "context", "--model", workspace["model"], "--input", workspace["input"],
            "--bbox", f"{b.x},{b.y},{b.width},{b.height}", "--rule", "zplus",
            "--target", "1",
        ])
        assert code == 0
        out = capsys.readouterr().out
        ratio = float(out.split("ratio = ")[1].splitlines()[0])
        assert ratio < 1.0

    def test_bbox_outside_image_exits_2(self, workspace):
        assert main([
            "context", "--model", workspace["model"], "--input", workspace["input"],
            "--bbox", "7,7,3,3",
        ]) == 2

    def test_malformed_bbox_exits_2(self, workspace):
        assert main([
            "context", "--model", workspace["model"], "--input", workspace["input"],
            "--bbox", "1,2,3",
        ]) == 2


class TestVerifyTaylor:
    def test_fixture_discrepancy_below_tolerance(self, workspace, capsys):
        code = main([
            "verify-taylor", "--model", workspace["model"], "--input", workspace["input"],
            "--layer", "1", "--target", "1", "--probe", "0.01",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "-> OK" in out
        assert "c-constancy probe" in out
        disc = float(out.split("max discrepancy=")[-1].split()[0])
        assert disc < 1e-6


class TestFixturesCommand:
    def test_generates_dataset_and_model(self, tmp_path, capsys):
        out_dir = tmp_path / "ds"
        model_out = tmp_path / "toy.json"
        code = main([
            "fixtures", "--out", str(out_dir), "--count", "16", "--noise", "0.0",
            "--seed", "3", "--train", "mlp", "--hidden", "8", "--epochs", "25",
            "--model-out", str(model_out),
        ])
        assert code == 0
        assert (out_dir / "manifest.csv").is_file()
        assert len(list(out_dir.glob("*.pgm"))) == 16
        assert model_out.is_file()
        acc = float(capsys.readouterr().out.split("train accuracy = ")[1].splitlines()[0])
        assert acc >= 0.95

    def test_identical_seeds_identical_dataset_bytes(self, tmp_path):
        blobs = []
        for tag in ("p", "q"):
            out_dir = tmp_path / tag
            assert main(["fixtures", "--out", str(out_dir), "--count", "6",
                         "--seed", "9"]) == 0
            blob = (out_dir / "manifest.csv").read_bytes()
            for pgm in sorted(out_dir.glob("*.pgm")):
                blob += pgm.read_bytes()
            blobs.append(blob)
        assert blobs[0] == blobs[1]

    def test_bad_spec_exits_2(self, tmp_path):
        assert main(["fixtures", "--out", str(tmp_path / "z"), "--patch-size", "9",
                     "--image-size", "8"]) == 2
