"""Oracle and identity suites run by ``superpixel-lime selftest``.

Each suite returns a :class:`SuiteResult`; a failing check is data, not an
exception. Exceptions raised inside a suite are caught and reported as a
failure of that suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import pandas as pd
import scipy.linalg

from superpixel_lime.core.blackbox import LinearModel, ShapeDetector
from superpixel_lime.core.coefficients import (
    alpha_bruteforce,
    alpha_gen,
    combinatorial_V,
    iter_all_masks,
    normalizer_pairwise,
    sigma_bounds_hold,
    sigma_inverse,
    sigma_matrix,
    sigma_set,
    useful_equalities,
)
from superpixel_lime.core.explainer import (
    cosine_weight,
    draw_masks,
    evaluate_masks,
    fit_surrogate,
    mask_weights,
    psi,
    weight_of_mask,
)
from superpixel_lime.core.gradients import approx_explanation, averaged_gradient
from superpixel_lime.core.image import (
    Image,
    MaskVector,
    ReplacementSpec,
    compute_replacement,
)
from superpixel_lime.core.limits import (
    beta_from_moments,
    beta_linear,
    beta_matrix_product,
    beta_shape_detector,
    moments_exact,
)
from superpixel_lime.core.models import SampleBatch
from superpixel_lime.core.segmentation import GridParams, grid_segment
from superpixel_lime.utils.logging import get_logger

log = get_logger("selftest")

NU_GRID = (0.25, 0.5, 1.0, 5.0, 100.0)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    seconds: float
    detail: str = ""


@dataclass
class SelftestReport:
    results: list[SuiteResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failed(self) -> list[str]:
        return [r.name for r in self.results if not r.passed]

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "suite": [r.name for r in self.results],
                "status": ["PASS" if r.passed else "FAIL" for r in self.results],
                "max_error": [r.max_error for r in self.results],
                "tolerance": [r.tolerance for r in self.results],
                "seconds": [round(r.seconds, 3) for r in self.results],
                "detail": [r.detail for r in self.results],
            }
        )


# -------------------------------------------------------------------
# Suites: each returns (max error, detail)
# -------------------------------------------------------------------


def alpha_oracle(max_d: int = 12) -> tuple[float, str]:
    worst = 0.0
    for nu in NU_GRID:
        for d in range(2, max_d + 1):
            for p in range(d + 1):
                for q in range(d - p + 1):
                    err = abs(alpha_gen(d, p, q, nu) - alpha_bruteforce(d, p, q, nu))
                    worst = max(worst, err)
    return worst, f"d=2..{max_d}, all p+q<=d"


def sigma_inverse_residual(max_d: int = 50) -> tuple[float, str]:
    worst = 0.0
    for nu in (0.25, 1.0, 10.0):
        for d in range(2, max_d + 1):
            product = sigma_matrix(d, nu) @ sigma_inverse(d, nu)
            worst = max(worst, float(np.max(np.abs(product - np.eye(d + 1)))))
    return worst, f"d=2..{max_d}"


def sigma_inverse_numeric(max_d: int = 50) -> tuple[float, str]:
    worst = 0.0
    for nu in (0.25, 1.0, 10.0):
        for d in range(2, max_d + 1):
            numeric = scipy.linalg.inv(sigma_matrix(d, nu))
            worst = max(worst, float(np.max(np.abs(sigma_inverse(d, nu) - numeric))))
    return worst, "closed form vs dense inverse"


def cancellation_identities(max_d: int = 64, sigma2_shift: float = 0.0) -> tuple[float, str]:
    worst = 0.0
    for nu in NU_GRID:
        for d in range(2, max_d + 1):
            s = sigma_set(d, nu)
            if sigma2_shift:
                s = replace(s, sigma2=s.sigma2 + sigma2_shift)
            worst = max(worst, float(np.max(np.abs(useful_equalities(d, nu, s)))))
    detail = f"d=2..{max_d}" + (f", sigma2 shifted by {sigma2_shift:g}" if sigma2_shift else "")
    return worst, detail


def coefficient_bounds(max_d: int = 64) -> tuple[float, str]:
    broken = []
    for nu in NU_GRID:
        for d in range(2, max_d + 1):
            for name, ok in sigma_bounds_hold(d, nu).items():
                if not ok:
                    broken.append(f"{name}@d={d},nu={nu:g}")
    return float(len(broken)), ", ".join(broken[:5]) or "all bounds hold"


def normalizer_paths(max_d: int = 64) -> tuple[float, str]:
    worst = 0.0
    for nu in NU_GRID:
        for d in range(2, max_d + 1):
            worst = max(worst, abs(sigma_set(d, nu).c_d - normalizer_pairwise(d, nu)))
    return worst, "c_d closed form vs pairwise sum"


def combinatorial_identity(max_d: int = 25) -> tuple[float, str]:
    mismatches = [d for d in range(1, max_d + 1) if combinatorial_V(d) != d * 4 ** (d - 1)]
    return float(len(mismatches)), f"mismatching d: {mismatches}" if mismatches else f"d=1..{max_d}"


def weight_identity(d: int = 12, n: int = 2000, nu: float = 0.25) -> tuple[float, str]:
    masks = draw_masks(d, n, seed=7)
    weights = mask_weights(masks, nu)
    worst = 0.0
    for row, w in zip(masks, weights):
        z = MaskVector(row)
        worst = max(worst, abs(w - weight_of_mask(z, nu)), abs(w - psi(z.zeros() / d, nu)))
    return worst, f"{n} masks, d={d}"


def cosine_reduction(d: int = 12, nu: float = 0.25) -> tuple[float, str]:
    worst = 0.0
    for z in iter_all_masks(d):
        for row in z[z.sum(axis=1) > 0]:
            mask = MaskVector(row)
            worst = max(worst, abs(cosine_weight(mask, nu) - weight_of_mask(mask, nu)))
    return worst, "cosine-distance kernel vs psi, all non-zero masks"


def _toy_setup(rows: int = 3, cols: int = 4, size: tuple[int, int] = (6, 8)):
    h, w = size
    rng = np.random.default_rng(11)
    image = Image(h, w, 1, rng.uniform(0.0, 1.0, h * w))
    partition = grid_segment(h, w, GridParams(rows, cols))
    return image, partition, rng


def linear_exactness() -> tuple[float, str]:
    image, partition, rng = _toy_setup()
    replacement = compute_replacement(image, partition, ReplacementSpec())
    model = LinearModel(rng.normal(size=image.pixels.size))
    d = partition.d
    masks = np.vstack(list(iter_all_masks(d)))
    y = evaluate_masks(model, image, replacement, partition, masks, batch_size=1 << 12)
    fitted = fit_surrogate(SampleBatch(masks, mask_weights(masks, 0.25), y), ridge=0.0)
    closed = beta_linear(model, image, replacement, partition)
    faithful = abs(closed.intercept + closed.coefficients.sum() - model.evaluate(image))
    return max(float(np.max(np.abs(fitted.as_array() - closed.as_array()))), faithful), f"d={d}, all 2^d masks"


def moment_paths() -> tuple[float, str]:
    image, partition, _ = _toy_setup()
    replacement = Image.constant(image.height, image.width, 0.0)
    shape = np.flatnonzero(image.pixels > 0.3)[:6]
    model = ShapeDetector(shape, 0.3, num_pixels=image.num_pixels)
    worst = 0.0
    for nu in (0.25, 1.0, 100.0):
        gamma = moments_exact(model, image, replacement, partition, nu)
        direct = beta_from_moments(gamma, partition.d, nu)
        product = beta_matrix_product(gamma, partition.d, nu)
        closed = beta_shape_detector(partition, shape, 0.3, image, replacement, nu)
        worst = max(
            worst,
            float(np.max(np.abs(direct.as_array() - product.as_array()))),
            float(np.max(np.abs(direct.as_array() - closed.as_array()))),
        )
    return worst, "sigma formulas vs S^-1 G vs shape-detector closed form"


def ig_linear_exactness() -> tuple[float, str]:
    image, partition, rng = _toy_setup()
    replacement = compute_replacement(image, partition, ReplacementSpec())
    model = LinearModel(rng.normal(size=image.pixels.size))
    closed = beta_linear(model, image, replacement, partition)
    worst = 0.0
    for steps in (1, 20):
        apx = approx_explanation(averaged_gradient(model, image, replacement, steps), image, replacement, partition, model)
        worst = max(worst, float(np.max(np.abs(apx.as_array() - closed.as_array()))))
    return worst, "beta_apx vs closed-form linear explanation"


Suite = tuple[str, Callable[[], tuple[float, str]], float]


def default_suites(sigma2_shift: float = 0.0) -> list[Suite]:
    return [
        ("alpha oracle", alpha_oracle, 1e-12),
        ("sigma inverse residual", sigma_inverse_residual, 1e-10),
        ("sigma inverse numeric", sigma_inverse_numeric, 1e-9),
        ("useful equalities", lambda: cancellation_identities(sigma2_shift=sigma2_shift), 1e-12),
        ("coefficient bounds", coefficient_bounds, 0.0),
        ("c_d two paths", normalizer_paths, 1e-12),
        ("combinatorial identity", combinatorial_identity, 0.0),
        ("weight identity", weight_identity, 1e-15),
        ("cosine reduction", cosine_reduction, 1e-12),
        ("linear exactness", linear_exactness, 1e-10),
        ("moment paths", moment_paths, 1e-10),
        ("ig linear exactness", ig_linear_exactness, 1e-12),
    ]


def run_selftest(suites: list[Suite] | None = None, sigma2_shift: float = 0.0) -> SelftestReport:
    results = []
    for name, fn, tol in suites or default_suites(sigma2_shift):
        start = time.perf_counter()
        try:
            err, detail = fn()
            passed = bool(err <= tol) and not math.isnan(err)
        except Exception as exc:  # a crashing suite is a failing suite
            err, detail, passed = math.nan, f"{type(exc).__name__}: {exc}", False
        elapsed = time.perf_counter() - start
        log.info("%-24s %s (max error %.3g, %.2fs)", name, "PASS" if passed else "FAIL", err, elapsed)
        results.append(SuiteResult(name, passed, err, tol, elapsed, detail))
    return SelftestReport(results)
