"""Black-box models f: [0,1]^D → ℝ used to exercise LIME.

Every model works on flat pixel vectors (length D·channels, the layout
of ``Image.pixels``). ``predict`` takes an n×P batch; ``evaluate`` and
``gradient`` take a single ``Image``.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
import yaml

from superpixel_lime.core.image import Image
from superpixel_lime.utils.logging import get_logger

log = get_logger("blackbox")


class BlackBoxModel(ABC):
    """Deterministic scalar model with an optional gradient and bound M."""

    #: |f| <= bound on [0,1]^P, or None when unknown
    bound: float | None = None
    has_gradient: bool = False

    @property
    @abstractmethod
    def input_size(self) -> int | None:
        """Expected flat input length P, or None if any length is accepted."""

    @abstractmethod
    def predict(self, batch: np.ndarray) -> np.ndarray:
        """f for every row of an n×P array."""

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic gradient")

    def check_input(self, size: int) -> None:
        expected = self.input_size
        if expected is not None and size != expected:
            raise ValueError(f"{type(self).__name__} expects {expected} inputs, got {size}")

    def evaluate(self, image: Image) -> float:
        self.check_input(image.pixels.size)
        return float(self.predict(image.pixels[None, :])[0])

    def gradient(self, image: Image) -> np.ndarray:
        """∂f/∂x at ``image``, same layout as ``image.pixels``."""
        self.check_input(image.pixels.size)
        return self.input_gradient(image.pixels)


@dataclass(eq=False)
class ShapeDetector(BlackBoxModel):
    """f(x) = Π_{u∈S} 1{x_u > τ} on single-channel images.

    The gradient is reported as identically zero (it is zero almost everywhere).
    """

    shape_pixels: np.ndarray
    tau: float
    num_pixels: int | None = None
    bound: float | None = 1.0
    has_gradient: bool = True

    def __post_init__(self) -> None:
        s = np.asarray(self.shape_pixels, dtype=np.int64).reshape(-1)
        if np.unique(s).size != s.size:
            raise ValueError("Shape pixels must be distinct")
        if s.size and s.min() < 0:
            raise ValueError("Shape pixel indices must be >= 0")
        if self.num_pixels is not None and s.size and s.max() >= self.num_pixels:
            raise ValueError(f"Shape pixel {int(s.max())} out of range for {self.num_pixels} pixels")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"Threshold tau must lie in (0, 1), got {self.tau}")
        self.shape_pixels = np.sort(s)

    @classmethod
    def from_rectangle(
        cls, height: int, width: int, top: int, left: int, rows: int, cols: int, tau: float
    ) -> "ShapeDetector":
        if top < 0 or left < 0 or top + rows > height or left + cols > width:
            raise ValueError("Shape rectangle falls outside the image")
        r, c = np.meshgrid(np.arange(top, top + rows), np.arange(left, left + cols), indexing="ij")
        return cls((r * width + c).reshape(-1), tau, num_pixels=height * width)

    @property
    def q(self) -> int:
        return int(self.shape_pixels.size)

    @property
    def input_size(self) -> int | None:
        return self.num_pixels

    def evaluate(self, image: Image) -> float:
        if image.channels != 1:
            raise ValueError("Shape detectors only accept single-channel images")
        return super().evaluate(image)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(batch)
        if self.q and self.shape_pixels.max() >= x.shape[1]:
            raise ValueError("Shape pixel index exceeds the input size")
        return np.all(x[:, self.shape_pixels] > self.tau, axis=1).astype(np.float64)

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def to_dict(self) -> dict:
        return {
            "type": "shape_detector",
            "pixels": self.shape_pixels.tolist(),
            "tau": self.tau,
        }


@dataclass(eq=False)
class LinearModel(BlackBoxModel):
    """f(x) = Σ_u λ_u x_u, one coefficient per flat pixel value."""

    coefficients: np.ndarray
    has_gradient: bool = True

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("Linear coefficients must be finite")
        self.bound = float(np.abs(self.coefficients).sum())

    @property
    def input_size(self) -> int:
        return int(self.coefficients.size)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(batch)
        self.check_input(x.shape[1])
        return x @ self.coefficients

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.coefficients.copy()

    def to_dict(self) -> dict:
        return {"type": "linear", "coefficients": self.coefficients.tolist()}


_ACTIVATIONS = ("tanh", "identity")


@dataclass(eq=False)
class SmallMLP(BlackBoxModel):
    """Fully connected network with tanh hidden layers and a scalar linear output.

    ``weights[i]`` has shape (fan_out, fan_in). With ``activation="identity"``
    the network is affine.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    has_gradient: bool = True

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("MLP needs one bias vector per weight matrix")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"Unknown activation {self.activation!r}")
        self.weights = [np.atleast_2d(np.asarray(w, dtype=np.float64)) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64).reshape(-1) for b in self.biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.size:
                raise ValueError(f"Layer {i}: {w.shape[0]} outputs but {b.size} biases")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"Layer {i}: fan-in {w.shape[1]} does not match previous layer")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"Layer {i}: parameters must be finite")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("The output layer must be scalar")
        self.bound = self._output_bound()

    @classmethod
    def from_seed(
        cls, sizes: Sequence[int], seed: int, scale: float = 1.0, activation: str = "tanh"
    ) -> "SmallMLP":
        """Gaussian init with std ``scale / sqrt(fan_in)``; ``sizes`` runs input → ... → 1."""
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("Layer sizes must start at the input size and end with 1")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in)))
            biases.append(rng.normal(0.0, 0.1 * scale, size=fan_out))
        return cls(weights, biases, activation=activation)

    @property
    def input_size(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def sizes(self) -> list[int]:
        return [self.input_size] + [w.shape[0] for w in self.weights]

    def _act(self, a: np.ndarray) -> np.ndarray:
        return np.tanh(a) if self.activation == "tanh" else a

    def _output_bound(self) -> float | None:
        w_out, b_out = self.weights[-1], self.biases[-1]
        if len(self.weights) > 1 and self.activation == "tanh":
            return float(np.abs(w_out).sum() + abs(b_out[0]))
        if len(self.weights) == 1:
            # affine in x ∈ [0,1]^P
            return float(np.abs(w_out).sum() + abs(b_out[0]))
        return None

    def predict(self, batch: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(batch, dtype=np.float64))
        self.check_input(h.shape[1])
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = self._act(h @ w.T + b)
        return (h @ self.weights[-1].T + self.biases[-1])[:, 0]

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        # reverse-mode through the hidden layers
        h = np.asarray(x, dtype=np.float64).reshape(-1)
        derivs = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = self._act(w @ h + b)
            derivs.append(1.0 - h**2 if self.activation == "tanh" else np.ones_like(h))
        grad = self.weights[-1][0].copy()
        for w, dact in zip(reversed(self.weights[:-1]), reversed(derivs)):
            grad = w.T @ (grad * dact)
        return grad

    def to_dict(self) -> dict:
        return {
            "type": "mlp",
            "activation": self.activation,
            "layers": [
                {"weights": w.tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmallMLP":
        if "layers" in d:
            layers = d["layers"]
            return cls(
                [np.asarray(layer["weights"]) for layer in layers],
                [np.asarray(layer["bias"]) for layer in layers],
                activation=d.get("activation", "tanh"),
            )
        return cls.from_seed(
            d["sizes"], int(d.get("seed", 0)), float(d.get("scale", 1.0)), d.get("activation", "tanh")
        )

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path

    @classmethod
    def load(cls, path: Path) -> "SmallMLP":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(eq=False)
class SumModel(BlackBoxModel):
    """f = f_1 + … + f_k, evaluated and differentiated termwise."""

    terms: list[BlackBoxModel] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError("A sum model needs at least one term")
        sizes = {t.input_size for t in self.terms if t.input_size is not None}
        if len(sizes) > 1:
            raise ValueError(f"Summed models disagree on input size: {sorted(sizes)}")
        bounds = [t.bound for t in self.terms]
        self.bound = None if any(b is None for b in bounds) else float(sum(bounds))  # type: ignore[arg-type]
        self.has_gradient = all(t.has_gradient for t in self.terms)

    @property
    def input_size(self) -> int | None:
        sizes = [t.input_size for t in self.terms if t.input_size is not None]
        return sizes[0] if sizes else None

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return np.sum([t.predict(batch) for t in self.terms], axis=0)

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.sum([t.input_gradient(x) for t in self.terms], axis=0)


class ConstantModel(BlackBoxModel):
    """f ≡ c."""

    has_gradient = True

    def __init__(self, value: float, num_inputs: int | None = None):
        self.value = float(value)
        self.num_inputs = num_inputs
        self.bound = abs(self.value)

    @property
    def input_size(self) -> int | None:
        return self.num_inputs

    def predict(self, batch: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(batch).shape[0], self.value)

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=np.float64))


# -------------------------------------------------------------------
# Model spec files
# -------------------------------------------------------------------


def _shape_pixels(spec: dict, height: int, width: int) -> np.ndarray:
    if "pixels" in spec:
        return np.asarray(spec["pixels"], dtype=np.int64)
    rects = spec.get("rectangles") or ([spec["rectangle"]] if "rectangle" in spec else [])
    if not rects:
        raise ValueError("Shape detector spec needs 'pixels' or 'rectangle(s)'")
    out = []
    for r in rects:
        top, left, rows, cols = int(r["top"]), int(r["left"]), int(r["height"]), int(r["width"])
        out.append(ShapeDetector.from_rectangle(height, width, top, left, rows, cols, 0.5).shape_pixels)
    return np.unique(np.concatenate(out))


def model_from_spec(
    spec: dict[str, Any], height: int, width: int, channels: int = 1, base_dir: Path | None = None
) -> BlackBoxModel:
    """Build a model from a parsed spec mapping ``{type: ..., ...}``."""
    kind = spec.get("type")
    num_inputs = height * width * channels

    if kind == "shape_detector":
        if channels != 1:
            raise ValueError("Shape detectors only accept single-channel images")
        return ShapeDetector(
            _shape_pixels(spec, height, width), float(spec.get("tau", 0.5)), num_pixels=height * width
        )
    if kind == "linear":
        if "coefficients" in spec:
            coef = np.asarray(spec["coefficients"], dtype=np.float64).reshape(-1)
        elif "csv" in spec:
            csv_path = Path(spec["csv"])
            if base_dir is not None and not csv_path.is_absolute():
                csv_path = base_dir / csv_path
            table = pd.read_csv(csv_path, header=None, float_precision="round_trip")
            coef = table.to_numpy(dtype=np.float64).reshape(-1)
        else:
            raise ValueError("Linear spec needs 'coefficients' or 'csv'")
        if coef.size != num_inputs:
            raise ValueError(f"Linear model has {coef.size} coefficients, image has {num_inputs} values")
        return LinearModel(coef)
    if kind == "mlp":
        spec = dict(spec)
        if "file" in spec:
            weights_path = Path(spec["file"])
            if base_dir is not None and not weights_path.is_absolute():
                weights_path = base_dir / weights_path
            model = SmallMLP.load(weights_path)
            model.check_input(num_inputs)
            return model
        if "sizes" in spec and spec["sizes"][0] is None:
            spec["sizes"] = [num_inputs] + list(spec["sizes"][1:])
        model = SmallMLP.from_dict(spec)
        model.check_input(num_inputs)
        return model
    if kind == "constant":
        return ConstantModel(float(spec.get("value", 0.0)), num_inputs)
    if kind == "sum":
        return SumModel(
            [model_from_spec(t, height, width, channels, base_dir) for t in spec.get("terms", [])]
        )
    raise ValueError(f"Unknown model type: {kind!r}")


def load_model(path: Path, height: int, width: int, channels: int = 1) -> BlackBoxModel:
    """Load a JSON/YAML model spec file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model spec not found: {path}")
    try:
        spec = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValueError(f"{path}: malformed model spec: {exc}") from exc
    if not isinstance(spec, dict):
        raise ValueError(f"{path}: model spec must be a mapping")
    model = model_from_spec(spec, height, width, channels, base_dir=path.parent)
    log.info("Loaded %s model from %s", spec.get("type"), path)
    return model
