"""Integrated gradients along the straight path from ξ to ξ̄.

IG^m_u = (1/m) Σ_{k=1}^{m} ∂_u f((1 − k/m)ξ + (k/m)ξ̄) is a right Riemann
sum: the gradient at ξ̄ is included and the one at ξ is not. Summing
(ξ_u − ξ̄_u)·IG^m_u over a superpixel gives the approximate explanation β_apx.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from superpixel_lime.core.blackbox import BlackBoxModel
from superpixel_lime.core.image import Image, SuperpixelPartition
from superpixel_lime.core.models import ExplanationVector, PathGradient
from superpixel_lime.utils.config import DEFAULT_FD_STEP, DEFAULT_IG_STEPS
from superpixel_lime.utils.logging import get_logger
from superpixel_lime.utils.threading import map_ordered

log = get_logger("gradients")

_FD_BLOCK = 256


def _require_same_grid(image: Image, baseline: Image) -> None:
    if not image.same_grid(baseline):
        raise ValueError(f"Image {image.shape} and baseline {baseline.shape} differ in shape")


def path_point(image: Image, baseline: Image, alpha: float) -> Image:
    """(1 − α)ξ + αξ̄."""
    _require_same_grid(image, baseline)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"Path position must lie in [0, 1], got {alpha}")
    mixed = (1.0 - alpha) * image.pixels + alpha * baseline.pixels
    return image.with_pixels(np.clip(mixed, 0.0, 1.0))


def finite_difference_gradient(
    model: BlackBoxModel, image: Image, step: float = DEFAULT_FD_STEP
) -> np.ndarray:
    """Central differences (f(x + h e_u) − f(x − h e_u)) / 2h, 2·P model queries."""
    if not step > 0:
        raise ValueError(f"Finite-difference step must be > 0, got {step}")
    x = image.pixels
    size = x.size
    grad = np.empty(size)
    for start in range(0, size, _FD_BLOCK):
        idx = np.arange(start, min(start + _FD_BLOCK, size))
        probes = np.repeat(x[None, :], 2 * idx.size, axis=0)
        rows = np.arange(idx.size)
        probes[rows, idx] += step
        probes[idx.size + rows, idx] -= step
        y = model.predict(probes)
        grad[idx] = (y[: idx.size] - y[idx.size :]) / (2.0 * step)
    return grad


def _gradient_fn(model: BlackBoxModel, fallback: bool, step: float):
    if model.has_gradient:
        return model.gradient
    if not fallback:
        raise ValueError(
            f"{type(model).__name__} has no gradient; enable the finite-difference fallback"
        )
    log.debug("Using finite differences (step %g) for %s", step, type(model).__name__)
    return lambda img: finite_difference_gradient(model, img, step)


def averaged_gradient(
    model: BlackBoxModel,
    image: Image,
    baseline: Image,
    steps: int = DEFAULT_IG_STEPS,
    fallback: bool = False,
    fd_step: float = DEFAULT_FD_STEP,
    threads: int = 1,
) -> PathGradient:
    if steps < 1:
        raise ValueError(f"Step count must be >= 1, got {steps}")
    _require_same_grid(image, baseline)
    grad = _gradient_fn(model, fallback, fd_step)

    points = [path_point(image, baseline, k / steps) for k in range(1, steps + 1)]
    grads = map_ordered(grad, points, threads)
    total = np.zeros(image.pixels.size)
    for g in grads:
        total += g
    return PathGradient(total / steps, steps)


def approx_explanation(
    ig: PathGradient,
    image: Image,
    baseline: Image,
    partition: SuperpixelPartition,
    model: BlackBoxModel | None = None,
) -> ExplanationVector:
    """β_apx,j = Σ_{u∈J_j} (ξ_u − ξ̄_u) IG_u.

    The intercept is f(ξ̄) when ``model`` is given, else 0.
    """
    _require_same_grid(image, baseline)
    partition.require_covers(image)
    if ig.values.size != image.pixels.size:
        raise ValueError(f"Gradient has {ig.values.size} values, image has {image.pixels.size}")

    contrib = (image.pixels - baseline.pixels) * ig.values
    coef = np.bincount(
        partition.channel_labels(image.channels), weights=contrib, minlength=partition.d
    )
    intercept = model.evaluate(baseline) if model is not None else 0.0
    return ExplanationVector(intercept, coef, "integrated-gradients", {"steps": ig.steps})


def path_predictions(
    model: BlackBoxModel, image: Image, baseline: Image, steps: int = 100
) -> pd.DataFrame:
    """f along the path at α = 0, 1/steps, …, 1."""
    if steps < 1:
        raise ValueError(f"Step count must be >= 1, got {steps}")
    _require_same_grid(image, baseline)
    alphas = np.linspace(0.0, 1.0, steps + 1)
    x = np.clip((1.0 - alphas)[:, None] * image.pixels + alphas[:, None] * baseline.pixels, 0, 1)
    return pd.DataFrame({"alpha": alphas, "prediction": model.predict(x)})


def completeness_gap(
    model: BlackBoxModel,
    image: Image,
    baseline: Image,
    partition: SuperpixelPartition,
    steps: int = DEFAULT_IG_STEPS,
    fallback: bool = False,
) -> float:
    """|Σ_j β_apx,j − (f(ξ) − f(ξ̄))|, which vanishes as the step count grows."""
    ig = averaged_gradient(model, image, baseline, steps, fallback=fallback)
    expl = approx_explanation(ig, image, baseline, partition)
    return abs(float(expl.coefficients.sum()) - (model.evaluate(image) - model.evaluate(baseline)))
