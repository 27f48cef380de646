"""Integration tests for the explanation pipeline.

These tests verify that all components work together correctly:
image file → segmentation → LIME / limit / IG → report → reload.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from superpixel_lime.core.blackbox import SumModel, load_model
from superpixel_lime.core.experiments import limit_explanation, save_report
from superpixel_lime.core.explainer import LimeConfig, explain, top_k_positive
from superpixel_lime.core.gradients import approx_explanation, averaged_gradient
from superpixel_lime.core.image import ReplacementSpec, compute_replacement
from superpixel_lime.core.imageio import read_image, read_partition, write_partition, write_pnm
from superpixel_lime.core.limits import beta_from_moments, moments_exact
from superpixel_lime.core.models import ExplanationVector
from superpixel_lime.core.segmentation import GridParams, grid_segment
from tests.fixtures import MODEL_SPEC_YAML, bright_rectangle_image, random_linear


@pytest.fixture
def pipeline(tmp_path):
    write_pnm(bright_rectangle_image(8, 8, top=0, left=0, rows=2, cols=2), tmp_path / "img.pgm")
    (tmp_path / "detector.yaml").write_text(MODEL_SPEC_YAML)
    image = read_image(tmp_path / "img.pgm")
    partition = grid_segment(8, 8, GridParams(4, 4))
    write_partition(partition, tmp_path / "labels.csv")
    return tmp_path, image, read_partition(tmp_path / "labels.csv")


class TestShapeDetectorPipeline:
    def test_lime_agrees_with_limit(self, pipeline):
        folder, image, partition = pipeline
        model = load_model(folder / "detector.yaml", 8, 8)
        spec = ReplacementSpec.black()
        replacement = compute_replacement(image, partition, spec)

        lime = explain(image, partition, spec, model, LimeConfig(n=500, ridge=0.0, seed=1))
        theory = limit_explanation(model, image, replacement, partition, 0.25)
        assert top_k_positive(lime, 1) == top_k_positive(theory, 1) == [1]
        np.testing.assert_allclose(lime.as_array(), theory.as_array(), atol=1e-8)

    def test_report_reloads(self, pipeline):
        folder, image, partition = pipeline
        model = load_model(folder / "detector.yaml", 8, 8)
        expl = explain(image, partition, ReplacementSpec.black(), model, LimeConfig(n=200))
        path = save_report(expl.to_dict(), "run", folder)
        again = ExplanationVector.from_dict(json.loads(path.read_text()))
        np.testing.assert_array_equal(again.as_array(), expl.as_array())
        assert again.metadata["d"] == 16


class TestSumPipeline:
    def test_limit_of_sum_is_sum_of_limits(self, pipeline):
        folder, image, partition = pipeline
        detector = load_model(folder / "detector.yaml", 8, 8)
        linear = random_linear(64, seed=2)
        replacement = compute_replacement(image, partition, ReplacementSpec.black())

        gamma = moments_exact(SumModel([detector, linear]), image, replacement, partition, 0.5)
        both = beta_from_moments(gamma, 16, 0.5)
        parts = (
            limit_explanation(detector, image, replacement, partition, 0.5).as_array()
            + limit_explanation(linear, image, replacement, partition, 0.5).as_array()
        )
        np.testing.assert_allclose(both.as_array(), parts, atol=1e-10)

    def test_ig_matches_limit_for_linear_part(self, pipeline):
        _, image, partition = pipeline
        linear = random_linear(64, seed=3)
        baseline = compute_replacement(image, partition, ReplacementSpec())
        ig = averaged_gradient(linear, image, baseline, 20)
        apx = approx_explanation(ig, image, baseline, partition, linear)
        theory = limit_explanation(linear, image, baseline, partition, 0.25)
        np.testing.assert_allclose(apx.as_array(), theory.as_array(), atol=1e-10)
