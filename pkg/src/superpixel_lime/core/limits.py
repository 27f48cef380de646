"""Limit explanations β^f: moments Γ, the Σ⁻¹Γ solve and the closed forms.

β̂_n concentrates around β^f = Σ⁻¹Γ^f with Γ^f = (E[πf(x)], E[πz_1 f(x)], …).
Γ is obtained by exact 2^d enumeration, by Monte Carlo, or in closed form
for shape detectors; linear models and the ν → ∞ limit have direct formulas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from superpixel_lime.core.blackbox import BlackBoxModel, LinearModel
from superpixel_lime.core.coefficients import (
    EnumerationLimitError,
    alpha_gen,
    iter_all_masks,
    sigma_inverse,
    sigma_set,
)
from superpixel_lime.core.explainer import evaluate_masks, mask_weights, sample_batch
from superpixel_lime.core.image import Image, SuperpixelPartition
from superpixel_lime.core.models import ExplanationVector, MomentVector
from superpixel_lime.utils.config import DEFAULT_BATCH_SIZE, MAX_ENUMERATION_D
from superpixel_lime.utils.logging import get_logger
from superpixel_lime.utils.threading import map_ordered

log = get_logger("limits")

Estimator = Literal["exact", "monte-carlo"]


# -------------------------------------------------------------------
# Moments
# -------------------------------------------------------------------


def _check_grids(image: Image, replacement: Image, partition: SuperpixelPartition) -> None:
    if not image.same_grid(replacement):
        raise ValueError(f"Image {image.shape} and replacement {replacement.shape} differ in shape")
    partition.require_covers(image)
    partition.require_multiple()


def moments_exact(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    nu: float,
    threads: int = 1,
) -> MomentVector:
    """Γ by summing over all 2^d masks with weight ψ(zeros/d)/2^d."""
    _check_grids(image, replacement, partition)
    d = partition.d
    if d > MAX_ENUMERATION_D:
        raise EnumerationLimitError(d)

    chunk = max(1, min(1 << 12, (1 << 22) // max(1, image.pixels.size)))

    def partial(masks: np.ndarray) -> np.ndarray:
        y = evaluate_masks(model, image, replacement, partition, masks, batch_size=masks.shape[0])
        wy = mask_weights(masks, nu) * y
        return np.concatenate(([wy.sum()], masks.T.astype(np.float64) @ wy))

    parts = map_ordered(partial, iter_all_masks(d, chunk), threads)
    total = np.zeros(d + 1)
    for part in parts:
        total += part
    total = np.ldexp(total, -d)
    return MomentVector(total[0], total[1:], source="exact-enumeration")


def moments_monte_carlo(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    nu: float,
    n: int,
    seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    threads: int = 1,
) -> MomentVector:
    """Γ̂_n over n masks drawn exactly as LIME draws them."""
    _check_grids(image, replacement, partition)
    batch = sample_batch(model, image, replacement, partition, n, nu, seed, batch_size, threads)
    return batch.moments()


# -------------------------------------------------------------------
# β from Γ
# -------------------------------------------------------------------


def beta_from_moments(gamma: MomentVector, d: int, nu: float) -> ExplanationVector:
    """β^f through the σ formulas:

    β_0 = c_d⁻¹ (σ_0Γ_0 + σ_1 Σ_j Γ_j)
    β_j = c_d⁻¹ (σ_1Γ_0 + σ_2Γ_j + σ_3 Σ_{k≠j} Γ_k)
    """
    if gamma.d != d:
        raise ValueError(f"Moment vector has d={gamma.d}, expected {d}")
    s = sigma_set(d, nu)
    total = float(gamma.gammas.sum())
    intercept = (s.sigma0 * gamma.gamma0 + s.sigma1 * total) / s.c_d
    coef = (
        s.sigma1 * gamma.gamma0 + s.sigma2 * gamma.gammas + s.sigma3 * (total - gamma.gammas)
    ) / s.c_d
    return ExplanationVector(intercept, coef, "limit", {"bandwidth": nu, "moments": gamma.source})


def beta_matrix_product(gamma: MomentVector, d: int, nu: float) -> ExplanationVector:
    """β^f = Σ⁻¹Γ as a dense product."""
    if gamma.d != d:
        raise ValueError(f"Moment vector has d={gamma.d}, expected {d}")
    beta = sigma_inverse(d, nu) @ gamma.as_array()
    return ExplanationVector.from_array(beta, "limit", bandwidth=nu, moments=gamma.source)


# -------------------------------------------------------------------
# Shape detectors
# -------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeIntersection:
    """How the superpixels touching a shape constrain the detector.

    ``must_on`` superpixels fire only with ξ, ``must_off`` only with ξ̄.
    When ``never_fires`` is set some superpixel fires with neither and f ≡ 0.
    """

    must_on: tuple[int, ...]
    must_off: tuple[int, ...]
    never_fires: bool

    @property
    def p(self) -> int:
        return len(self.must_on)

    @property
    def q(self) -> int:
        return len(self.must_off)


def classify_shape(
    partition: SuperpixelPartition,
    shape_pixels: np.ndarray,
    tau: float,
    image: Image,
    replacement: Image,
) -> ShapeIntersection:
    if image.channels != 1 or replacement.channels != 1:
        raise ValueError("Shape detectors only accept single-channel images")
    if not 0.0 < tau < 1.0:
        raise ValueError(f"Threshold tau must lie in (0, 1), got {tau}")
    _check_grids(image, replacement, partition)
    shape = np.unique(np.asarray(shape_pixels, dtype=np.int64))
    if shape.size and (shape.min() < 0 or shape.max() >= partition.num_pixels):
        raise ValueError("Shape pixel index out of range")

    on, off, never = [], [], False
    labels = partition.labels[shape]
    for j in np.unique(labels):
        pixels = shape[labels == j]
        lit_original = bool(np.all(image.pixels[pixels] > tau))
        lit_replacement = bool(np.all(replacement.pixels[pixels] > tau))
        if lit_original and not lit_replacement:
            on.append(int(j))
        elif lit_replacement and not lit_original:
            off.append(int(j))
        elif not lit_original:
            never = True
    return ShapeIntersection(tuple(on), tuple(off), never)


def shape_detector_moments(
    partition: SuperpixelPartition,
    shape_pixels: np.ndarray,
    tau: float,
    image: Image,
    replacement: Image,
    nu: float,
) -> MomentVector:
    """Γ^f of a shape detector from generalized α coefficients.

    Γ_0 = α_{p,q}; Γ_j = α_{p,q} on must-on superpixels, 0 on must-off
    superpixels and α_{p+1,q} on all others.
    """
    info = classify_shape(partition, shape_pixels, tau, image, replacement)
    d = partition.d
    if info.never_fires:
        return MomentVector(0.0, np.zeros(d), source="closed-form")

    p, q = info.p, info.q
    base = alpha_gen(d, p, q, nu)
    gammas = np.zeros(d)
    if p + q < d:
        gammas[:] = alpha_gen(d, p + 1, q, nu)
    gammas[np.asarray(info.must_on, dtype=np.int64) - 1] = base
    gammas[np.asarray(info.must_off, dtype=np.int64) - 1] = 0.0
    return MomentVector(base, gammas, source="closed-form")


def beta_shape_detector(
    partition: SuperpixelPartition,
    shape_pixels: np.ndarray,
    tau: float,
    image: Image,
    replacement: Image,
    nu: float,
) -> ExplanationVector:
    info = classify_shape(partition, shape_pixels, tau, image, replacement)
    d = partition.d
    meta = {"bandwidth": nu, "p": info.p, "q": info.q}

    if np.asarray(shape_pixels).size == 0:
        # empty shape: f ≡ 1
        return ExplanationVector(1.0, np.zeros(d), "limit", meta)
    if info.never_fires:
        return ExplanationVector(0.0, np.zeros(d), "limit", {**meta, "never_fires": True})

    gamma = shape_detector_moments(partition, shape_pixels, tau, image, replacement, nu)
    expl = beta_from_moments(gamma, d, nu)
    expl.metadata.update(meta)
    return expl


# -------------------------------------------------------------------
# Linear models and the large-bandwidth limit
# -------------------------------------------------------------------


def beta_linear(
    coefficients: np.ndarray | LinearModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
) -> ExplanationVector:
    """β_j = Σ_{u∈J_j} λ_u (ξ_u − ξ̄_u), β_0 = f(ξ̄); no bandwidth dependence."""
    lam = coefficients.coefficients if isinstance(coefficients, LinearModel) else coefficients
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if lam.size != image.pixels.size:
        raise ValueError(f"{lam.size} linear coefficients for {image.pixels.size} pixel values")
    if not image.same_grid(replacement):
        raise ValueError(f"Image {image.shape} and replacement {replacement.shape} differ in shape")
    partition.require_covers(image)

    contrib = lam * (image.pixels - replacement.pixels)
    coef = np.bincount(
        partition.channel_labels(image.channels), weights=contrib, minlength=partition.d
    )
    return ExplanationVector(float(lam @ replacement.pixels), coef, "limit")


def beta_infinity(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    estimator: Estimator = "exact",
    n: int = 10_000,
    seed: int = 0,
    threads: int = 1,
) -> ExplanationVector:
    """ν → ∞ limit: β_j = 2(E[f | z_j = 1] − E[f]) with unweighted expectations.

    The intercept is (d+1)E[f] − 2 Σ_j E[z_j f].
    """
    if estimator == "exact":
        gamma = moments_exact(model, image, replacement, partition, math.inf, threads)
    elif estimator == "monte-carlo":
        gamma = moments_monte_carlo(
            model, image, replacement, partition, math.inf, n, seed, threads=threads
        )
    else:
        raise ValueError(f"Unknown estimator {estimator!r}")

    d = partition.d
    mean_f = gamma.gamma0
    coef = 2.0 * (2.0 * gamma.gammas - mean_f)
    intercept = (d + 1) * mean_f - 2.0 * float(gamma.gammas.sum())
    return ExplanationVector(intercept, coef, "limit", {"bandwidth": math.inf, "moments": gamma.source})
