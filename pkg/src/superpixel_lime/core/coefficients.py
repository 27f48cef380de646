"""Closed-form coefficients of the limit explanation.

With π = ψ(zeros(z)/d) and z uniform on {0,1}^d:

- α_{p,q} = E[π z_1⋯z_p (1 − z_{p+1})⋯(1 − z_{p+q})], α_p = α_{p,0};
- Σ = E[π x xᵀ] for x = (1, z), whose entries are α_0, α_1 or α_2;
- Σ⁻¹ = c_d⁻¹ · (σ_0 … σ_3 in the same pattern).

Binomial masses are correctly rounded integer ratios up to EXACT_BINOMIAL_N
and log-gamma values beyond it, so d in the thousands is fine. Brute-force
oracles enumerate all 2^d masks and are guarded at d <= 20.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gammaln

from superpixel_lime.core.explainer import psi
from superpixel_lime.utils.config import MAX_ENUMERATION_D
from superpixel_lime.utils.logging import get_logger

log = get_logger("coefficients")

MAX_COMBINATORIAL_D = 1000
EXACT_BINOMIAL_N = 1024


class EnumerationLimitError(ValueError):
    """Exact 2^d enumeration requested above the supported d."""

    def __init__(self, d: int, limit: int = MAX_ENUMERATION_D):
        self.d = d
        super().__init__(f"Exact enumeration needs d <= {limit}, got d={d}")


def _check_d(d: int) -> None:
    if d < 2:
        raise ValueError(f"Coefficients need d >= 2, got d={d}")


def _check_nu(nu: float) -> None:
    if not nu > 0:
        raise ValueError(f"Bandwidth must be > 0, got {nu}")


def binomial_pmf(n: int) -> np.ndarray:
    """C(n, t)/2^n for t = 0..n.

    Up to EXACT_BINOMIAL_N each entry is an exact integer ratio rounded once;
    larger n goes through log-gamma values, accurate to about 1e-13 relative.
    """
    if n < 0:
        raise ValueError(f"Binomial size must be >= 0, got {n}")
    if n <= EXACT_BINOMIAL_N:
        denom = 1 << n
        return np.array([math.comb(n, t) / denom for t in range(n + 1)], dtype=np.float64)
    t = np.arange(n + 1, dtype=np.float64)
    log_comb = gammaln(n + 1.0) - gammaln(t + 1.0) - gammaln(n - t + 1.0)
    return np.exp(log_comb - n * math.log(2.0))


# -------------------------------------------------------------------
# α coefficients
# -------------------------------------------------------------------


def alpha_gen(d: int, p: int, q: int, nu: float) -> float:
    """α_{p,q} = 2^{−d} Σ_s C(d−p−q, s−q) ψ(s/d).

    Computed as 2^{−(p+q)} Σ_t P_n(t) ψ((t+q)/d), n = d−p−q, P_n the Binomial(n, 1/2) mass.
    """
    _check_d(d)
    _check_nu(nu)
    if p < 0 or q < 0 or p + q > d:
        raise ValueError(f"Need p, q >= 0 and p + q <= d, got p={p}, q={q}, d={d}")
    n = d - p - q
    t = np.arange(n + 1)
    total = float(np.dot(binomial_pmf(n), psi((t + q) / d, nu)))
    return math.ldexp(total, -(p + q))


def alpha(d: int, p: int, nu: float) -> float:
    """α_p = E[π z_1⋯z_p]."""
    return alpha_gen(d, p, 0, nu)


def iter_all_masks(d: int, chunk: int = 1 << 14) -> Iterator[np.ndarray]:
    """All 2^d masks in integer order, row m having bit j of m in column j."""
    if d > MAX_ENUMERATION_D:
        raise EnumerationLimitError(d)
    bits = np.arange(d, dtype=np.int64)
    total = 1 << d
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield ((codes[:, None] >> bits) & 1).astype(np.int8)


def alpha_bruteforce(d: int, p: int, q: int, nu: float) -> float:
    """Exact average over all 2^d masks (oracle for :func:`alpha_gen`)."""
    if d > MAX_ENUMERATION_D:
        raise EnumerationLimitError(d)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if p < 0 or q < 0 or p + q > d:
        raise ValueError(f"Need p, q >= 0 and p + q <= d, got p={p}, q={q}, d={d}")
    total = 0.0
    for z in iter_all_masks(d):
        weight = psi((d - z.sum(axis=1)) / d, nu)
        on = np.all(z[:, :p] == 1, axis=1)
        off = np.all(z[:, p : p + q] == 0, axis=1)
        total += float(weight[on & off].sum())
    return math.ldexp(total, -d)


# -------------------------------------------------------------------
# σ coefficients, Σ and Σ⁻¹
# -------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaSet:
    d: int
    nu: float
    alpha0: float
    alpha1: float
    alpha2: float
    sigma0: float
    sigma1: float
    sigma2: float
    sigma3: float
    c_d: float

    def sigmas(self) -> tuple[float, float, float, float]:
        return (self.sigma0, self.sigma1, self.sigma2, self.sigma3)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "nu": self.nu,
            "alpha": [self.alpha0, self.alpha1, self.alpha2],
            "sigma": list(self.sigmas()),
            "c_d": self.c_d,
        }


def sigma_set(d: int, nu: float) -> SigmaSet:
    _check_d(d)
    a0, a1, a2 = (alpha(d, p, nu) for p in range(3))
    gap = a1 - a2
    return SigmaSet(
        d=d,
        nu=nu,
        alpha0=a0,
        alpha1=a1,
        alpha2=a2,
        sigma0=(d - 1) * a2 + a1,
        sigma1=-a1,
        sigma2=((d - 2) * a0 * a2 - (d - 1) * a1 * a1 + a0 * a1) / gap,
        sigma3=(a1 * a1 - a0 * a2) / gap,
        c_d=(d - 1) * a0 * a2 - d * a1 * a1 + a0 * a1,
    )


def _patterned(d: int, corner: float, border: float, diag: float, off: float) -> np.ndarray:
    m = np.full((d + 1, d + 1), off)
    np.fill_diagonal(m, diag)
    m[0, :] = border
    m[:, 0] = border
    m[0, 0] = corner
    return m


def sigma_matrix(d: int, nu: float) -> np.ndarray:
    """Σ: α_0 at (0,0), α_1 on the first row/column and the diagonal, α_2 elsewhere."""
    _check_d(d)
    a0, a1, a2 = (alpha(d, p, nu) for p in range(3))
    return _patterned(d, a0, a1, a1, a2)


def sigma_inverse(d: int, nu: float, sigmas: SigmaSet | None = None) -> np.ndarray:
    s = sigmas or sigma_set(d, nu)
    return _patterned(d, s.sigma0, s.sigma1, s.sigma2, s.sigma3) / s.c_d


def normalizer_pairwise(d: int, nu: float) -> float:
    """c_d as (1/d) Σ_{s<t} P(s)P(t)(s−t)² ψ(s/d)ψ(t/d), P the Binomial(d, 1/2) mass."""
    _check_d(d)
    s = np.arange(d + 1)
    mass = binomial_pmf(d) * psi(s / d, nu)
    upper = np.triu_indices(d + 1, k=1)
    terms = mass[upper[0]] * mass[upper[1]] * (upper[1] - upper[0]) ** 2
    return math.fsum(terms.tolist()) / d


def alpha_det(d: int, nu: float) -> float:
    """α_1² − α_0α_2; bounded in absolute value by 1/(2d)."""
    _check_d(d)
    a0, a1, a2 = (alpha(d, p, nu) for p in range(3))
    return a1 * a1 - a0 * a2


def useful_equalities(d: int, nu: float, sigmas: SigmaSet | None = None) -> np.ndarray:
    """Residuals of the five cancellation identities (all zero for the true σ).

    Pass ``sigmas`` to check a modified set against the true α values.
    """
    s = sigmas or sigma_set(d, nu)
    a0, a1, a2 = (alpha(d, p, nu) for p in range(3))
    s0, s1, s2, s3 = s.sigmas()
    c = s.c_d
    return np.array(
        [
            s0 * a1 + s1 * a1 + (d - 1) * s1 * a2,
            s1 * a1 + s2 * a1 + (d - 1) * s3 * a2 - c,
            s1 * a1 + s2 * a2 + s3 * a1 + (d - 2) * s3 * a2,
            s1 * a0 + s2 * a1 + (d - 1) * s3 * a1,
            s0 * a0 + d * s1 * a1 - c,
        ]
    )


def sigma_bounds_hold(d: int, nu: float) -> dict[str, bool]:
    """Check every a-priori bound on the α/σ coefficients at (d, ν)."""
    s = sigma_set(d, nu)
    e_half = math.exp(1.0 / (2.0 * nu * nu))
    e_full = math.exp(1.0 / (nu * nu))
    tol = 1e-12
    return {
        "sigma0": abs(s.sigma0) <= 3 * d / 4 + tol,
        "sigma1": abs(s.sigma1) <= 0.5 + tol,
        "sigma2": abs(s.sigma2) <= 2 * e_half + tol,
        "sigma3": abs(s.sigma3) <= 2 * e_half / d + tol,
        "c_d": 1.0 / (4 * e_full) - tol <= s.c_d <= 0.25 + tol,
        "alpha_gap": s.alpha1 - s.alpha2 >= 1.0 / (4 * e_half) - tol,
        "alpha_det": abs(alpha_det(d, nu)) <= 1.0 / (2 * d) + tol,
        "inverse_norm": sigma_inverse_norm(d, nu) <= 8 * d * e_full * (1 + tol),
    }


def sigma_inverse_norm(d: int, nu: float) -> float:
    """Operator (spectral) norm of Σ⁻¹."""
    return float(np.linalg.norm(sigma_inverse(d, nu), 2))


def sigma_inverse_frobenius(d: int, nu: float) -> float:
    """‖Σ⁻¹‖_F, an upper bound on the operator norm."""
    s = sigma_set(d, nu)
    total = s.sigma0**2 + 2 * d * s.sigma1**2 + d * s.sigma2**2 + (d * d - d) * s.sigma3**2
    return math.sqrt(total) / s.c_d


# -------------------------------------------------------------------
# Concentration bounds
# -------------------------------------------------------------------


def min_sample_size(M: float, eps: float, eta: float, d: int, nu: float) -> int:
    """Sample size after which ‖β̂_n − β^f‖ <= ε with probability >= 1 − η.

    ⌈max(2^15 d^4 e^{2/ν²}, 2^21 d^7 max(M, M²) e^{4/ν²} / ε²) · log(8d/η)⌉
    """
    _check_d(d)
    _check_nu(nu)
    if not M > 0:
        raise ValueError(f"Model bound M must be > 0, got {M}")
    if not eps > 0:
        raise ValueError(f"Accuracy eps must be > 0, got {eps}")
    if not 0 < eta < 1:
        raise ValueError(f"Failure probability eta must lie in (0, 1), got {eta}")

    inv_nu_sq = 1.0 / (nu * nu)
    try:
        first = 2.0**15 * float(d) ** 4 * math.exp(2.0 * inv_nu_sq)
        second = 2.0**21 * float(d) ** 7 * max(M, M * M) * math.exp(4.0 * inv_nu_sq) / eps**2
    except OverflowError:
        raise ValueError(f"Sample-size bound overflows at nu={nu}")
    value = max(first, second) * math.log(8.0 * d / eta)
    if not math.isfinite(value):
        raise ValueError(f"Sample-size bound overflows at nu={nu}")
    return math.ceil(value)


def covariance_tail_bound(n: int, d: int, t: float) -> float:
    """P(‖Σ̂_n − Σ‖ >= t) <= 4d exp(−n t² / (32 d²))."""
    if n < 1 or t < 0:
        raise ValueError("Need n >= 1 and t >= 0")
    return 4 * d * math.exp(-n * t * t / (32.0 * d * d))


def moment_tail_bound(n: int, d: int, t: float, M: float) -> float:
    """P(‖Γ̂_n − Γ^f‖ >= t) <= 4d exp(−n t² / (32 M d²))."""
    if n < 1 or t < 0 or not M > 0:
        raise ValueError("Need n >= 1, t >= 0 and M > 0")
    return 4 * d * math.exp(-n * t * t / (32.0 * M * d * d))


def combinatorial_V(d: int) -> int:
    """Σ_{j<k} C(d,j) C(d,k) (k−j)² in exact integers (equals d·4^{d−1})."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if d > MAX_COMBINATORIAL_D:
        raise ValueError(f"Exact double sum limited to d <= {MAX_COMBINATORIAL_D}, got {d}")
    binom = [math.comb(d, j) for j in range(d + 1)]
    return sum(
        binom[j] * binom[k] * (k - j) ** 2 for j in range(d + 1) for k in range(j + 1, d + 1)
    )
