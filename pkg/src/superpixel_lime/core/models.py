"""Common result records shared by the explainer, the limit theory and integrated gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import pandas as pd

Provenance = Literal["empirical", "limit", "integrated-gradients"]
MomentSource = Literal["exact-enumeration", "monte-carlo", "closed-form"]


@dataclass
class ExplanationVector:
    """Interpretable coefficients: an intercept plus one coefficient per superpixel.

    ``coefficients[j - 1]`` belongs to superpixel ``j``.
    """

    intercept: float
    coefficients: np.ndarray
    provenance: Provenance = "empirical"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.intercept = float(self.intercept)
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)

    @property
    def d(self) -> int:
        return int(self.coefficients.size)

    def as_array(self) -> np.ndarray:
        """(β_0, β_1, …, β_d)."""
        return np.concatenate(([self.intercept], self.coefficients))

    @classmethod
    def from_array(
        cls, beta: np.ndarray, provenance: Provenance = "empirical", **metadata: Any
    ) -> "ExplanationVector":
        b = np.asarray(beta, dtype=np.float64).reshape(-1)
        return cls(float(b[0]), b[1:].copy(), provenance, dict(metadata))

    def coefficient(self, j: int) -> float:
        if not 1 <= j <= self.d:
            raise ValueError(f"Superpixel id {j} out of range 1..{self.d}")
        return float(self.coefficients[j - 1])

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "intercept": self.intercept,
            "coefficients": [float(c) for c in self.coefficients],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExplanationVector":
        return cls(
            intercept=float(d.get("intercept", 0.0)),
            coefficients=np.asarray(d.get("coefficients", []), dtype=np.float64),
            provenance=d.get("provenance", "empirical"),
            metadata=dict(d.get("metadata", {})),
        )

    def to_dataframe(self) -> pd.DataFrame:
        """Coefficient table: one row per superpixel id, intercept as id 0."""
        return pd.DataFrame(
            {
                "superpixel": np.arange(self.d + 1),
                "coefficient": self.as_array(),
            }
        )


@dataclass
class MomentVector:
    """Γ = (E[π f(x)], E[π z_1 f(x)], …, E[π z_d f(x)])."""

    gamma0: float
    gammas: np.ndarray
    source: MomentSource = "exact-enumeration"

    def __post_init__(self) -> None:
        self.gamma0 = float(self.gamma0)
        self.gammas = np.asarray(self.gammas, dtype=np.float64).reshape(-1)

    @property
    def d(self) -> int:
        return int(self.gammas.size)

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.gamma0], self.gammas))

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "gamma0": self.gamma0,
            "gammas": [float(g) for g in self.gammas],
        }


@dataclass
class PathGradient:
    """Riemann-sum averaged gradient IG^m, one value per flat pixel value."""

    values: np.ndarray
    steps: int

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError(f"Step count must be >= 1, got {self.steps}")
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)


@dataclass
class SampleBatch:
    """The regression data of one LIME run: masks, weights, responses."""

    masks: np.ndarray
    weights: np.ndarray
    responses: np.ndarray

    def __post_init__(self) -> None:
        self.masks = np.atleast_2d(np.asarray(self.masks, dtype=np.int8))
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.responses = np.asarray(self.responses, dtype=np.float64).reshape(-1)
        n = self.masks.shape[0]
        if self.weights.size != n or self.responses.size != n:
            raise ValueError(
                f"Batch sizes disagree: {n} masks, {self.weights.size} weights, "
                f"{self.responses.size} responses"
            )
        if n == 0:
            raise ValueError("A sample batch needs at least one sample")
        if np.any(self.weights <= 0) or np.any(self.weights > 1):
            raise ValueError("Sample weights must lie in (0, 1]")

    @property
    def n(self) -> int:
        return int(self.masks.shape[0])

    @property
    def d(self) -> int:
        return int(self.masks.shape[1])

    def design(self) -> np.ndarray:
        """Intercept-augmented design matrix [1 | Z]."""
        return np.hstack([np.ones((self.n, 1)), self.masks.astype(np.float64)])

    def covariance(self) -> np.ndarray:
        """Σ̂_n = XᵀWX / n."""
        x = self.design()
        return (x * self.weights[:, None]).T @ x / self.n

    def moments(self) -> MomentVector:
        """Γ̂_n = XᵀWy / n."""
        g = self.design().T @ (self.weights * self.responses) / self.n
        return MomentVector(g[0], g[1:], source="monte-carlo")
