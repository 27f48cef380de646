"""Empirical LIME for images: masks, weights, perturbed samples and the ridge surrogate.

Pipeline of :func:`explain`:

1. draw n Bernoulli(1/2) masks z_i ∈ {0,1}^d (counter-based, so row i
   depends only on (seed, i));
2. weight each mask by π_i = ψ(s_i/d), s_i the number of zeros;
3. build x_i by keeping superpixels with z_ij = 1 and replacing the rest;
4. query the model, in batches;
5. fit the weighted ridge regression of y_i on z_i with an unpenalized intercept.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from superpixel_lime.core.blackbox import BlackBoxModel
from superpixel_lime.core.image import (
    Image,
    MaskVector,
    ReplacementSpec,
    SuperpixelPartition,
    apply_masks,
    compute_replacement,
)
from superpixel_lime.core.models import ExplanationVector, SampleBatch
from superpixel_lime.utils.config import (
    DEFAULT_BANDWIDTH,
    DEFAULT_BATCH_SIZE,
    DEFAULT_NUM_SAMPLES,
    DEFAULT_RIDGE,
    DEFAULT_TOP_K,
    PIVOT_RTOL,
)
from superpixel_lime.utils.logging import get_logger
from superpixel_lime.utils.threading import map_ordered

log = get_logger("explainer")

_SEED_MASK = (1 << 64) - 1


class SingularSystemError(ArithmeticError):
    """The weighted normal equations cannot be solved reliably.

    ``column`` is 0 for the intercept and j for superpixel j.
    """

    def __init__(self, column: int, reason: str = ""):
        self.column = column
        what = "intercept" if column == 0 else f"superpixel {column}"
        msg = f"Singular normal equations at column {column} ({what})"
        super().__init__(f"{msg}: {reason}" if reason else msg)


@dataclass(frozen=True)
class LimeConfig:
    n: int = DEFAULT_NUM_SAMPLES
    bandwidth: float = DEFAULT_BANDWIDTH
    ridge: float = DEFAULT_RIDGE
    seed: int = 0
    top_k: int = DEFAULT_TOP_K
    batch_size: int = DEFAULT_BATCH_SIZE
    threads: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"Sample count n must be >= 1, got {self.n}")
        if not self.bandwidth > 0:
            raise ValueError(f"Bandwidth must be > 0, got {self.bandwidth}")
        if not self.ridge >= 0:
            raise ValueError(f"Ridge penalty must be >= 0, got {self.ridge}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.batch_size < 1:
            raise ValueError(f"Batch size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LimeConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


# -------------------------------------------------------------------
# Weights
# -------------------------------------------------------------------


def psi(t, nu: float):
    """ψ(t) = exp(−(1 − √(1 − t))² / (2ν²)) for t ∈ [0, 1]; ν may be ``inf``.

    Accepts scalars or arrays and returns the same kind.
    """
    if not nu > 0:
        raise ValueError(f"Bandwidth must be > 0, got {nu}")
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise ValueError("psi is defined on [0, 1] only")
    out = np.exp(-((1.0 - np.sqrt(1.0 - arr)) ** 2) / (2.0 * nu * nu))
    return float(out) if out.ndim == 0 else out


def weight_of_mask(z: MaskVector, nu: float) -> float:
    if z.d < 2:
        raise ValueError(f"Masks need d >= 2, got {z.d}")
    return psi(z.zeros() / z.d, nu)


def mask_weights(masks: np.ndarray, nu: float) -> np.ndarray:
    """ψ(zeros/d) for every row of an n×d mask matrix."""
    z = np.atleast_2d(masks)
    d = z.shape[1]
    return psi((d - z.sum(axis=1)) / d, nu)


def cosine_weight(z: MaskVector, nu: float) -> float:
    """exp(−d_cos(1, z)² / (2ν²)), undefined for the all-zeros mask."""
    ones = int(z.bits.sum())
    if ones == 0:
        raise ValueError("Cosine distance to the all-zeros mask is undefined")
    d_cos = 1.0 - ones / (math.sqrt(z.d) * math.sqrt(ones))
    return math.exp(-(d_cos**2) / (2.0 * nu * nu))


# -------------------------------------------------------------------
# Sampling
# -------------------------------------------------------------------


def _mask_row(seed: int, row: int, d: int) -> np.ndarray:
    # Philox keyed by the seed; counter word 1 carries the row index
    gen = np.random.Philox(key=seed & _SEED_MASK, counter=[0, row, 0, 0])
    words = gen.random_raw(-(-d // 64)).astype("<u8")
    return np.unpackbits(words.view(np.uint8), bitorder="little")[:d]


def draw_masks(d: int, n: int, seed: int) -> np.ndarray:
    """n×d matrix of fair coin flips; entry (i, j) depends only on (seed, i, j)."""
    if d < 2:
        raise ValueError(f"Masks need d >= 2, got {d}")
    if n < 1:
        raise ValueError(f"Sample count n must be >= 1, got {n}")
    out = np.empty((n, d), dtype=np.int8)
    for i in range(n):
        out[i] = _mask_row(seed, i, d)
    return out


def _batches(n: int, size: int) -> list[slice]:
    return [slice(start, min(start + size, n)) for start in range(0, n, size)]


def evaluate_masks(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    masks: np.ndarray,
    batch_size: int = DEFAULT_BATCH_SIZE,
    threads: int = 1,
) -> np.ndarray:
    """f(x_i) for every mask row, queried ``batch_size`` samples at a time."""
    model.check_input(image.pixels.size)

    def run(rows: slice) -> np.ndarray:
        x = apply_masks(image, replacement, partition, masks[rows])
        return np.asarray(model.predict(x), dtype=np.float64).reshape(-1)

    chunks = map_ordered(run, _batches(masks.shape[0], batch_size), threads)
    y = np.concatenate(chunks)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("Model returned non-finite predictions")
    return y


def sample_batch(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    n: int,
    nu: float,
    seed: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    threads: int = 1,
) -> SampleBatch:
    """Masks, ψ-weights and model responses for one LIME run."""
    partition.require_multiple()
    masks = draw_masks(partition.d, n, seed)
    weights = mask_weights(masks, nu)
    responses = evaluate_masks(model, image, replacement, partition, masks, batch_size, threads)
    return SampleBatch(masks, weights, responses)


# -------------------------------------------------------------------
# Surrogate
# -------------------------------------------------------------------


def _first_indefinite_minor(a: np.ndarray) -> int:
    for k in range(1, a.shape[0] + 1):
        if np.linalg.eigvalsh(a[:k, :k])[0] <= 0:
            return k - 1
    return a.shape[0] - 1


def fit_surrogate(batch: SampleBatch, ridge: float = DEFAULT_RIDGE) -> ExplanationVector:
    """Weighted ridge regression of responses on masks, intercept unpenalized.

    Solves (XᵀWX + λ·diag(0, 1, …, 1)) β = XᵀWy with X = [1 | Z] by Cholesky.
    """
    if not ridge >= 0:
        raise ValueError(f"Ridge penalty must be >= 0, got {ridge}")

    if ridge == 0:
        z = batch.masks
        constant = np.all(z == z[:1], axis=0)
        if np.any(constant):
            col = int(np.flatnonzero(constant)[0]) + 1
            raise SingularSystemError(col, "superpixel never toggled in the sample")

    x = batch.design()
    wx = x * batch.weights[:, None]
    gram = wx.T @ x
    rhs = wx.T @ batch.responses
    penalty = np.full(batch.d + 1, ridge)
    penalty[0] = 0.0
    gram[np.diag_indices_from(gram)] += penalty

    try:
        factor, lower = scipy.linalg.cho_factor(gram, lower=True, check_finite=True)
    except np.linalg.LinAlgError:
        raise SingularSystemError(_first_indefinite_minor(gram), "matrix not positive definite")

    pivots = np.diag(factor) ** 2
    small = np.flatnonzero(pivots < PIVOT_RTOL * pivots.max())
    if small.size:
        raise SingularSystemError(int(small[0]), "pivot below relative tolerance")

    beta = scipy.linalg.cho_solve((factor, lower), rhs)
    return ExplanationVector.from_array(beta, "empirical", ridge=ridge, n=batch.n)


def explain(
    image: Image,
    partition: SuperpixelPartition,
    replacement_spec: ReplacementSpec,
    model: BlackBoxModel,
    config: LimeConfig | None = None,
) -> ExplanationVector:
    """Run LIME end to end and return β̂_n with the config and top-k ids attached."""
    config = config or LimeConfig()
    partition.require_covers(image)
    partition.require_multiple()
    replacement = compute_replacement(image, partition, replacement_spec)

    log.info(
        "Explaining with d=%d, n=%d, nu=%g, ridge=%g, seed=%d",
        partition.d, config.n, config.bandwidth, config.ridge, config.seed,
    )
    batch = sample_batch(
        model,
        image,
        replacement,
        partition,
        config.n,
        config.bandwidth,
        config.seed,
        config.batch_size,
        config.threads,
    )
    expl = fit_surrogate(batch, config.ridge)
    expl.metadata = {
        "config": config.to_dict(),
        "replacement": replacement_spec.to_dict(),
        "d": partition.d,
        "seed": config.seed,
        "top_k": top_k_positive(expl, config.top_k),
    }
    log.debug("Top-%d superpixels: %s", config.top_k, expl.metadata["top_k"])
    return expl


# -------------------------------------------------------------------
# Ranking
# -------------------------------------------------------------------


def top_k_positive(expl: ExplanationVector, k: int) -> list[int]:
    """Ids of the k largest strictly positive coefficients; ties go to the smaller id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(
        (j for j in range(1, expl.d + 1) if expl.coefficients[j - 1] > 0),
        key=lambda j: (-expl.coefficients[j - 1], j),
    )
    return ranked[:k]


def top_k_negative(expl: ExplanationVector, k: int) -> list[int]:
    """Ids of the k most negative coefficients, most negative first."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ranked = sorted(
        (j for j in range(1, expl.d + 1) if expl.coefficients[j - 1] < 0),
        key=lambda j: (expl.coefficients[j - 1], j),
    )
    return ranked[:k]
