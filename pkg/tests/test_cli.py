"""Tests for the command-line interface."""

from __future__ import annotations

import json
import math

import pandas as pd
import pytest

from superpixel_lime.cli import EXIT_INVALID_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_SELFTEST, main
from superpixel_lime.core.imageio import read_partition, write_image_csv, write_pnm
from superpixel_lime.core.image import Image
from tests.fixtures import LINEAR_SPEC_YAML, MODEL_SPEC_YAML, bright_rectangle_image, random_image

EXPERIMENT_YAML = """\
model:
  type: mlp
  sizes: [null, 1]
  activation: identity
synthetic:
  kind: texture
  count: 2
  height: 8
  width: 8
grid: {rows: 2, cols: 2}
lime: {n: 200, ridge: 0}
jaccard_ks: [1, 2]
repetitions: 2
"""


@pytest.fixture
def workspace(tmp_path):
    """An 8×8 image with a bright 2×2 corner, a detector for it and a linear model."""
    write_pnm(bright_rectangle_image(8, 8, top=0, left=0, rows=2, cols=2), tmp_path / "img.pgm")
    (tmp_path / "detector.yaml").write_text(MODEL_SPEC_YAML)
    write_image_csv(random_image(8, 8, seed=3), tmp_path / "coefficients.csv")
    (tmp_path / "linear.yaml").write_text(LINEAR_SPEC_YAML)
    return tmp_path


def _grid(rows: int, cols: int) -> list[str]:
    return ["--segmenter", "grid", "--rows", str(rows), "--cols", str(cols)]


class TestSegment:
    def test_grid(self, workspace, capsys):
        code = main(["segment", str(workspace / "img.pgm"), *_grid(2, 2), "--out-dir", str(workspace)])
        assert code == EXIT_OK
        assert read_partition(workspace / "img_partition.csv").d == 4
        assert "d=4" in capsys.readouterr().out

    def test_explicit_output(self, workspace):
        out = workspace / "labels.csv"
        assert main(["segment", str(workspace / "img.pgm"), *_grid(2, 4), "--output", str(out)]) == EXIT_OK
        assert read_partition(out).d == 8

    def test_missing_image(self, workspace):
        assert main(["segment", str(workspace / "nope.pgm"), *_grid(2, 2)]) == EXIT_INVALID_INPUT

    def test_uniform_image_single_superpixel(self, workspace, capsys):
        write_image_csv(Image.constant(8, 8, 0.4), workspace / "flat.csv")
        assert main(["segment", str(workspace / "flat.csv"), "--out-dir", str(workspace)]) == EXIT_OK
        assert read_partition(workspace / "flat_partition.csv").d == 1
        assert "Only one superpixel" in capsys.readouterr().out


class TestExplain:
    def _run(self, workspace, *extra: str) -> int:
        return main(
            [
                "explain", str(workspace / "img.pgm"), *_grid(4, 4), "--replacement", "black",
                "--model", str(workspace / "detector.yaml"),
                "--out-dir", str(workspace), *extra,
            ]
        )

    def test_writes_report(self, workspace, capsys):
        assert self._run(workspace, "-n", "300", "--seed", "4") == EXIT_OK
        report = json.loads((workspace / "img_lime.json").read_text())
        assert report["provenance"] == "empirical"
        assert len(report["coefficients"]) == 16
        assert report["metadata"]["seed"] == 4
        assert report["top_k"][0] == 1
        assert len(report["top_k_negative"]) <= 5
        assert report["config"]["n"] == 300
        assert "top_k" not in report["metadata"]
        assert (workspace / "img_lime_coefficients.csv").exists()
        assert "Top-5 positive" in capsys.readouterr().out

    def test_config_file_lime_section(self, workspace):
        cfg = workspace / "run.yaml"
        cfg.write_text("lime:\n  n: 50\n  top_k: 2\n")
        assert self._run(workspace, "--config", str(cfg)) == EXIT_OK
        report = json.loads((workspace / "img_lime.json").read_text())
        assert report["config"]["n"] == 50
        assert len(report["top_k"]) <= 2

    def test_singular_system_without_ridge(self, workspace):
        assert self._run(workspace, "-n", "1", "--ridge", "0") == EXIT_NUMERICAL

    def test_nan_model(self, workspace):
        (workspace / "nan.yaml").write_text("type: constant\nvalue: .nan\n")
        code = main(
            [
                "explain", str(workspace / "img.pgm"), *_grid(2, 2), "-n", "20",
                "--model", str(workspace / "nan.yaml"), "--out-dir", str(workspace),
            ]
        )
        assert code == EXIT_NUMERICAL

    def test_unknown_model_type(self, workspace):
        (workspace / "bad.yaml").write_text("type: forest\n")
        code = main(["explain", str(workspace / "img.pgm"), *_grid(2, 2), "--model", str(workspace / "bad.yaml")])
        assert code == EXIT_INVALID_INPUT

    def test_solid_replacement_needs_color(self, workspace):
        assert self._run(workspace, "--replacement", "solid") == EXIT_INVALID_INPUT

    def test_malformed_model_spec(self, workspace):
        (workspace / "broken.yaml").write_text("type: [shape_detector\n")
        code = main(["explain", str(workspace / "img.pgm"), *_grid(2, 2), "--model", str(workspace / "broken.yaml")])
        assert code == EXIT_INVALID_INPUT

    def test_malformed_config(self, workspace):
        (workspace / "broken.yaml").write_text("lime: [unclosed\n")
        assert self._run(workspace, "--config", str(workspace / "broken.yaml")) == EXIT_INVALID_INPUT

    def test_uniform_image_points_to_segmenter_options(self, workspace, caplog):
        write_image_csv(Image.constant(8, 8, 0.4), workspace / "flat.csv")
        code = main(
            [
                "explain", str(workspace / "flat.csv"), "--model", str(workspace / "detector.yaml"),
                "--out-dir", str(workspace),
            ]
        )
        assert code == EXIT_INVALID_INPUT
        assert "--ratio" in caplog.text
        assert "--segmenter grid" in caplog.text


class TestLimit:
    def _run(self, workspace, *extra: str) -> int:
        return main(
            [
                "limit", str(workspace / "img.pgm"), "--replacement", "black",
                "--model", str(workspace / "detector.yaml"),
                "--out-dir", str(workspace), *extra,
            ]
        )

    def test_closed_form_single_superpixel(self, workspace):
        assert self._run(workspace, *_grid(4, 4)) == EXIT_OK
        report = json.loads((workspace / "img_limit.json").read_text())
        assert report["provenance"] == "limit"
        assert report["coefficients"][0] == pytest.approx(1.0, abs=1e-10)
        assert report["coefficients"][1:] == pytest.approx([0.0] * 15, abs=1e-10)

    def test_exact_matches_closed_form(self, workspace):
        assert self._run(workspace, *_grid(2, 4), "--nu", "1") == EXIT_OK
        closed = json.loads((workspace / "img_limit.json").read_text())["coefficients"]
        assert self._run(workspace, *_grid(2, 4), "--nu", "1", "--estimator", "exact") == EXIT_OK
        exact = json.loads((workspace / "img_limit.json").read_text())["coefficients"]
        assert exact == pytest.approx(closed, abs=1e-10)

    def test_infinity(self, workspace):
        assert self._run(workspace, *_grid(2, 2), "--infinity") == EXIT_OK
        report = json.loads((workspace / "img_limit.json").read_text())
        assert report["coefficients"][0] == pytest.approx(1.0, abs=1e-12)

    def test_sample_size_bound(self, workspace, capsys):
        code = self._run(workspace, *_grid(1, 2), "--nu", "inf", "--eps", "1", "--eta", "0.5")
        assert code == EXIT_OK
        report = json.loads((workspace / "img_limit.json").read_text())
        assert report["min_sample_size"] == math.ceil(2**28 * math.log(32))
        bounds = report["bounds"]
        assert bounds["sigma_inverse_frobenius"] > 0
        assert bounds["moment_deviation"] == pytest.approx(bounds["covariance_deviation"])
        assert 0.0 <= bounds["covariance_tail"] < 0.5
        assert 0.0 <= bounds["moment_tail"] < 0.5
        assert "Sample size" in capsys.readouterr().out

    def test_enumeration_guard(self, workspace):
        code = self._run(workspace, *_grid(7, 3), "--estimator", "exact")
        assert code == EXIT_INVALID_INPUT

    def test_partition_file(self, workspace):
        labels = workspace / "labels.csv"
        assert main(["segment", str(workspace / "img.pgm"), *_grid(4, 4), "--output", str(labels)]) == EXIT_OK
        assert self._run(workspace, "--partition", str(labels)) == EXIT_OK


class TestIntegratedGradients:
    def test_linear_model(self, workspace, capsys):
        code = main(
            [
                "ig", str(workspace / "img.pgm"), *_grid(2, 2), "-m", "3", "--dump-ig", "--dump-path",
                "--model", str(workspace / "linear.yaml"), "--out-dir", str(workspace),
            ]
        )
        assert code == EXIT_OK
        report = json.loads((workspace / "img_ig.json").read_text())
        assert report["provenance"] == "integrated-gradients"
        assert report["metadata"]["steps"] == 3
        assert (workspace / "img_ig_pixels.csv").exists()
        path = pd.read_csv(workspace / "img_ig_path.csv")
        assert list(path.columns) == ["alpha", "prediction"]
        assert len(path) == 4
        assert "Sum of beta_apx" in capsys.readouterr().out


class TestExperiments:
    def test_compare_needs_config(self):
        assert main(["compare"]) == EXIT_INVALID_INPUT

    def test_malformed_config(self, tmp_path):
        cfg = tmp_path / "experiment.yaml"
        cfg.write_text("lime: [unclosed\n")
        assert main(["compare", "--config", str(cfg)]) == EXIT_INVALID_INPUT

    def test_compare(self, tmp_path, capsys):
        cfg = tmp_path / "experiment.yaml"
        cfg.write_text(EXPERIMENT_YAML)
        assert main(["compare", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / "comparison.json").read_text())
        assert report["aggregate"] == {"J1": 1.0, "J2": 1.0}
        out = capsys.readouterr().out
        assert "4 runs, 0 failures" in out
        assert "random baseline at d=4" in out

    def test_concentration(self, tmp_path):
        cfg = tmp_path / "experiment.yaml"
        cfg.write_text(EXPERIMENT_YAML)
        code = main(["concentration", "--config", str(cfg), "--out-dir", str(tmp_path), "--seed", "9"])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "concentration.json").read_text())
        assert report["seeds"] == [9, 10]
        assert (tmp_path / "concentration_boxplot.dat").exists()
        assert (tmp_path / "concentration_summary.csv").exists()


@pytest.mark.slow
class TestSelftestCommand:
    def test_passes(self, capsys):
        assert main(["selftest"]) == EXIT_OK
        assert "All suites passed" in capsys.readouterr().out

    def test_perturbed_sigma2_fails(self, capsys):
        assert main(["selftest", "--perturb-sigma2", "1e-6"]) == EXIT_SELFTEST
        assert "useful equalities" in capsys.readouterr().out
