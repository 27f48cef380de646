"""Tests for moments, limit explanations and their closed forms."""

from __future__ import annotations

import math

import numpy as np
import pytest

from superpixel_lime.core.blackbox import ConstantModel, ShapeDetector, SumModel
from superpixel_lime.core.coefficients import EnumerationLimitError
from superpixel_lime.core.experiments import synthetic_digit
from superpixel_lime.core.explainer import LimeConfig, explain
from superpixel_lime.core.image import Image, ReplacementSpec, compute_replacement
from superpixel_lime.core.limits import (
    beta_from_moments,
    beta_infinity,
    beta_linear,
    beta_matrix_product,
    beta_shape_detector,
    classify_shape,
    moments_exact,
    moments_monte_carlo,
    shape_detector_moments,
)
from tests.fixtures import (
    bright_rectangle_image,
    grid,
    random_image,
    random_linear,
    rectangle_detector,
)


class TestClassifyShape:
    def test_zero_replacement_all_must_on(self):
        img = bright_rectangle_image(6, 8, top=0, left=1, rows=2, cols=2)
        rep = Image.constant(6, 8, 0.0)
        shape = rectangle_detector(6, 8, 0, 1, 2, 2).shape_pixels
        info = classify_shape(grid(), shape, 0.5, img, rep)
        assert info.must_on == (1, 2)
        assert info.must_off == ()
        assert not info.never_fires
        assert (info.p, info.q) == (2, 0)

    def test_bright_replacement_must_off(self):
        img = Image.constant(6, 8, 0.1)
        rep = Image.constant(6, 8, 0.9)
        info = classify_shape(grid(), [0, 1], 0.5, img, rep)
        assert info.must_off == (1,)
        assert info.p == 0

    def test_lit_in_both_is_free(self):
        img = Image.constant(6, 8, 0.9)
        info = classify_shape(grid(), [0, 1], 0.5, img, Image.constant(6, 8, 0.8))
        assert (info.p, info.q, info.never_fires) == (0, 0, False)

    def test_never_fires(self):
        img = Image.constant(6, 8, 0.1)
        info = classify_shape(grid(), [0], 0.5, img, Image.constant(6, 8, 0.2))
        assert info.never_fires

    def test_rejects_rgb(self):
        img = random_image(channels=3)
        with pytest.raises(ValueError, match="single-channel"):
            classify_shape(grid(), [0], 0.5, img, img)

    def test_rejects_out_of_range_pixel(self):
        img = Image.constant(6, 8, 0.5)
        with pytest.raises(ValueError, match="out of range"):
            classify_shape(grid(), [48], 0.5, img, img)


class TestShapeDetectorLimit:
    def setup_method(self):
        self.partition = grid()
        self.zero = Image.constant(6, 8, 0.0)

    def test_single_superpixel_shape_is_exact(self):
        img = bright_rectangle_image(6, 8, top=0, left=0, rows=2, cols=2)
        shape = rectangle_detector(6, 8, 0, 0, 2, 2).shape_pixels
        for nu in (0.25, 1.0, math.inf):
            expl = beta_shape_detector(self.partition, shape, 0.5, img, self.zero, nu)
            expected = np.zeros(13)
            expected[1] = 1.0
            np.testing.assert_allclose(expl.as_array(), expected, atol=1e-10)

    @pytest.mark.parametrize("p", [2, 3, 4])
    def test_split_shape_large_bandwidth(self, p):
        img = Image.constant(6, 8, 0.9)
        shape = [self.partition.members(j)[0] for j in range(1, p + 1)]
        expl = beta_shape_detector(self.partition, shape, 0.5, img, self.zero, math.inf)
        np.testing.assert_allclose(expl.coefficients[:p], 0.5 ** (p - 1), atol=1e-10)
        np.testing.assert_allclose(expl.coefficients[p:], 0.0, atol=1e-10)
        assert expl.metadata["p"] == p

    def test_split_shape_bandwidth_100_near_half(self):
        img = Image.constant(6, 8, 0.9)
        shape = [self.partition.members(1)[0], self.partition.members(2)[0]]
        expl = beta_shape_detector(self.partition, shape, 0.5, img, self.zero, 100.0)
        np.testing.assert_allclose(expl.coefficients[:2], 0.5, atol=1e-3)

    def test_empty_shape(self):
        img = random_image()
        expl = beta_shape_detector(self.partition, [], 0.5, img, self.zero, 0.25)
        assert expl.intercept == 1.0
        assert np.all(expl.coefficients == 0.0)

    def test_never_firing_shape(self):
        img = Image.constant(6, 8, 0.1)
        expl = beta_shape_detector(self.partition, [0, 9], 0.5, img, self.zero, 0.25)
        assert np.all(expl.as_array() == 0.0)
        assert expl.metadata["never_fires"]

    @pytest.mark.parametrize("nu", [0.25, 1.0, 100.0])
    def test_matches_enumeration(self, nu):
        img = random_image(seed=13)
        rep = compute_replacement(img, self.partition, ReplacementSpec())
        shape = np.flatnonzero(img.pixels > 0.35)[:8]
        model = ShapeDetector(shape, 0.35, num_pixels=48)
        closed = shape_detector_moments(self.partition, shape, 0.35, img, rep, nu)
        exact = moments_exact(model, img, rep, self.partition, nu)
        np.testing.assert_allclose(closed.as_array(), exact.as_array(), atol=1e-12)

    def test_must_off_superpixels_match_enumeration(self):
        img = Image.constant(6, 8, 0.1)
        rep = Image.constant(6, 8, 0.9)
        shape = [0, 1, 10]
        model = ShapeDetector(shape, 0.5, num_pixels=48)
        closed = beta_shape_detector(self.partition, shape, 0.5, img, rep, 0.5)
        exact = beta_from_moments(moments_exact(model, img, rep, self.partition, 0.5), 12, 0.5)
        assert closed.metadata["q"] == 2
        np.testing.assert_allclose(closed.as_array(), exact.as_array(), atol=1e-10)


class TestLinearLimit:
    def test_canceled_superpixel(self):
        arr = np.random.default_rng(3).uniform(size=(6, 8))
        arr[:2, :2] = 0.5
        img = Image.from_array(arr)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        expl = beta_linear(random_linear(48), img, rep, p)
        assert expl.coefficient(1) == 0.0

    def test_intercept_and_faithfulness(self):
        img = random_image(seed=1)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        model = random_linear(48)
        expl = beta_linear(model, img, rep, p)
        assert expl.intercept == pytest.approx(model.evaluate(rep), abs=1e-12)
        assert expl.intercept + expl.coefficients.sum() == pytest.approx(model.evaluate(img), abs=1e-12)

    @pytest.mark.parametrize("nu", [0.25, 2.0])
    def test_matches_enumeration(self, nu):
        img = random_image(seed=2)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        model = random_linear(48)
        exact = beta_from_moments(moments_exact(model, img, rep, p, nu), p.d, nu)
        np.testing.assert_allclose(exact.as_array(), beta_linear(model, img, rep, p).as_array(), atol=1e-10)

    def test_rgb(self):
        img = random_image(channels=3, seed=4)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec.black(3))
        model = random_linear(144)
        expl = beta_linear(model, img, rep, p)
        assert expl.intercept == 0.0
        assert expl.coefficients.sum() == pytest.approx(model.evaluate(img), abs=1e-12)

    def test_size_mismatch(self):
        img = random_image()
        with pytest.raises(ValueError, match="coefficients"):
            beta_linear(np.ones(10), img, img, grid())


class TestMoments:
    def setup_method(self):
        self.image = random_image(seed=5)
        self.partition = grid()
        self.replacement = compute_replacement(self.image, self.partition, ReplacementSpec())

    def test_two_solve_paths_agree(self):
        model = rectangle_detector(6, 8, 1, 1, 3, 3, 0.2)
        for nu in (0.25, 1.0, 100.0):
            gamma = moments_exact(model, self.image, self.replacement, self.partition, nu)
            a = beta_from_moments(gamma, 12, nu)
            b = beta_matrix_product(gamma, 12, nu)
            np.testing.assert_allclose(a.as_array(), b.as_array(), atol=1e-10)

    def test_limit_is_linear_in_model(self):
        f = rectangle_detector(6, 8, 0, 0, 2, 3, 0.3)
        g = random_linear(48, seed=8)
        args = (self.image, self.replacement, self.partition, 0.5)
        both = beta_from_moments(moments_exact(SumModel([f, g]), *args), 12, 0.5)
        separate = (
            beta_from_moments(moments_exact(f, *args), 12, 0.5).as_array()
            + beta_from_moments(moments_exact(g, *args), 12, 0.5).as_array()
        )
        np.testing.assert_allclose(both.as_array(), separate, atol=1e-10)

    def test_constant_model(self):
        model = ConstantModel(2.0, 48)
        gamma = moments_exact(model, self.image, self.replacement, self.partition, 0.25)
        expl = beta_from_moments(gamma, 12, 0.25)
        assert expl.intercept == pytest.approx(2.0, abs=1e-12)
        np.testing.assert_allclose(expl.coefficients, 0.0, atol=1e-12)

    def test_threads_do_not_change_result(self):
        model = random_linear(48)
        a = moments_exact(model, self.image, self.replacement, self.partition, 0.25)
        b = moments_exact(model, self.image, self.replacement, self.partition, 0.25, threads=3)
        np.testing.assert_array_equal(a.as_array(), b.as_array())

    def test_monte_carlo_close_to_exact(self):
        model = random_linear(48)
        exact = moments_exact(model, self.image, self.replacement, self.partition, 1.0)
        mc = moments_monte_carlo(model, self.image, self.replacement, self.partition, 1.0, 20000, 0)
        assert mc.source == "monte-carlo"
        np.testing.assert_allclose(mc.as_array(), exact.as_array(), atol=0.1)

    def test_enumeration_guard(self):
        img = random_image(3, 7)
        p = grid(3, 7, 3, 7)
        with pytest.raises(EnumerationLimitError):
            moments_exact(ConstantModel(1.0), img, img, p, 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="expected"):
            beta_from_moments(moments_exact(ConstantModel(1.0), self.image, self.replacement, self.partition, 1.0), 5, 1.0)


class TestBetaInfinity:
    def test_linear_model(self):
        img = random_image(seed=6)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        model = random_linear(48)
        expl = beta_infinity(model, img, rep, p)
        np.testing.assert_allclose(expl.as_array(), beta_linear(model, img, rep, p).as_array(), atol=1e-10)

    def test_matches_large_bandwidth_solve(self):
        img = random_image(seed=7)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        model = rectangle_detector(6, 8, 2, 2, 2, 4, 0.3)
        direct = beta_from_moments(moments_exact(model, img, rep, p, math.inf), 12, math.inf)
        np.testing.assert_allclose(beta_infinity(model, img, rep, p).as_array(), direct.as_array(), atol=1e-10)

    def test_close_to_wide_finite_bandwidth(self):
        img = random_image(seed=7)
        p = grid()
        rep = compute_replacement(img, p, ReplacementSpec())
        model = rectangle_detector(6, 8, 2, 2, 2, 4, 0.3)
        wide = beta_from_moments(moments_exact(model, img, rep, p, 100.0), 12, 100.0)
        np.testing.assert_allclose(beta_infinity(model, img, rep, p).as_array(), wide.as_array(), atol=1e-3)

    def test_unknown_estimator(self):
        img = random_image()
        with pytest.raises(ValueError, match="estimator"):
            beta_infinity(ConstantModel(1.0), img, img, grid(), estimator="bootstrap")  # type: ignore[arg-type]


@pytest.mark.slow
class TestEmpiricalAgainstClosedForm:
    """Repeated LIME runs on 28×28 images next to the shape-detector closed form."""

    SEEDS = range(5)

    def _medians(self, image, model, partition, nu):
        cfg = [LimeConfig(n=1000, bandwidth=nu, ridge=1.0, seed=s) for s in self.SEEDS]
        runs = [explain(image, partition, ReplacementSpec.black(), model, c).coefficients for c in cfg]
        return np.median(np.vstack(runs), axis=0)

    def test_single_superpixel_shape(self):
        img = bright_rectangle_image(28, 28, top=8, left=8, rows=4, cols=4)
        p = grid(28, 28, 4, 4)
        model = rectangle_detector(28, 28, 8, 8, 4, 4)
        medians = self._medians(img, model, p, 0.25)
        expected = beta_shape_detector(p, model.shape_pixels, 0.5, img, Image.constant(28, 28, 0.0), 0.25)
        assert expected.coefficient(6) == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(medians, expected.coefficients, atol=0.05)

    def test_two_way_split(self):
        img = bright_rectangle_image(28, 28, top=2, left=5, rows=3, cols=4)
        p = grid(28, 28, 4, 4)
        model = rectangle_detector(28, 28, 2, 5, 3, 4)
        medians = self._medians(img, model, p, 100.0)
        expected = beta_shape_detector(p, model.shape_pixels, 0.5, img, Image.constant(28, 28, 0.0), 100.0)
        assert (expected.metadata["p"], expected.metadata["q"]) == (2, 0)
        np.testing.assert_allclose(medians, expected.coefficients, atol=0.05)
        np.testing.assert_allclose(medians[:2], 0.5, atol=0.06)

    def _digit(self):
        """First synthetic digit whose bright strokes reach at least two cells of a 3×3 grid."""
        p = grid(28, 28, 3, 3)
        for seed in range(50):
            img = synthetic_digit(28, 28, seed=seed)
            bright = np.flatnonzero(img.pixels > 0.5)
            cells = np.unique(p.labels[bright])
            if cells.size >= 2:
                return img, p, bright, cells
        raise AssertionError("no digit spans two cells")

    def test_digit_single_superpixel(self):
        img, p, bright, cells = self._digit()
        shape = bright[p.labels[bright] == cells[0]][:4]
        model = ShapeDetector(shape, 0.5, num_pixels=784)
        medians = self._medians(img, model, p, 0.25)
        expected = beta_shape_detector(p, shape, 0.5, img, Image.constant(28, 28, 0.0), 0.25)
        assert expected.coefficient(int(cells[0])) == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(medians, expected.coefficients, atol=0.05)

    def test_digit_two_way_split(self):
        img, p, bright, cells = self._digit()
        shape = np.array([bright[p.labels[bright] == c][0] for c in cells[:2]])
        model = ShapeDetector(shape, 0.5, num_pixels=784)
        medians = self._medians(img, model, p, 100.0)
        expected = beta_shape_detector(p, shape, 0.5, img, Image.constant(28, 28, 0.0), 100.0)
        assert expected.metadata["p"] == 2
        np.testing.assert_allclose(medians, expected.coefficients, atol=0.05)


@pytest.mark.slow
class TestLargeSampleConvergence:
    """At n = 10^4 each single LIME run sits near its limit explanation."""

    @pytest.mark.parametrize("seed", range(5))
    def test_sup_norm_below_tolerance(self, seed):
        img = bright_rectangle_image(28, 28, top=2, left=5, rows=3, cols=4)
        p = grid(28, 28, 3, 4)
        model = rectangle_detector(28, 28, 2, 5, 3, 4)
        cfg = LimeConfig(n=10_000, bandwidth=1.0, ridge=1.0, seed=seed)
        fitted = explain(img, p, ReplacementSpec.black(), model, cfg)
        expected = beta_shape_detector(p, model.shape_pixels, 0.5, img, Image.constant(28, 28, 0.0), 1.0)
        assert expected.metadata["p"] == 2
        assert np.abs(fitted.as_array() - expected.as_array()).max() < 0.05
