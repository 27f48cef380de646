"""Experiments comparing empirical LIME with its theory and with integrated gradients.

- comparison: top-k superpixels from LIME vs from β_apx, scored by Jaccard index;
- concentration: repeated LIME runs with distinct seeds next to β^f;
- synthetic digit/texture images, so nothing needs an external dataset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
import scipy.stats

from superpixel_lime.core.blackbox import (
    BlackBoxModel,
    LinearModel,
    ShapeDetector,
    load_model,
    model_from_spec,
)
from superpixel_lime.core.explainer import LimeConfig, explain, top_k_positive
from superpixel_lime.core.gradients import approx_explanation, averaged_gradient
from superpixel_lime.core.image import (
    Image,
    ReplacementSpec,
    SuperpixelPartition,
    compute_replacement,
)
from superpixel_lime.core.imageio import read_image
from superpixel_lime.core.limits import (
    beta_from_moments,
    beta_linear,
    beta_shape_detector,
    moments_exact,
)
from superpixel_lime.core.models import ExplanationVector
from superpixel_lime.core.segmentation import (
    GridParams,
    QuickshiftParams,
    grid_segment,
    quickshift_segment,
)
from superpixel_lime.utils.config import (
    DEFAULT_IG_STEPS,
    DEFAULT_JACCARD_KS,
    MAX_ENUMERATION_D,
    OUTPUTS_DIR,
    ensure_dirs,
)
from superpixel_lime.utils.logging import get_logger
from superpixel_lime.utils.threading import map_ordered

log = get_logger("experiments")


# -------------------------------------------------------------------
# Jaccard index
# -------------------------------------------------------------------


def jaccard(a, b) -> float:
    """|a ∩ b| / |a ∪ b|; two empty sets count as identical (1.0)."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def expected_random_jaccard(k: int, d: int) -> float:
    """E[J(A, B)] for a fixed k-subset A and a uniform k-subset B of {1, …, d}.

    |A ∩ B| is hypergeometric, and J = i / (2k − i).
    """
    if not 1 <= k <= d:
        raise ValueError(f"Need 1 <= k <= d, got k={k}, d={d}")
    i = np.arange(k + 1)
    pmf = scipy.stats.hypergeom(d, k, k).pmf(i)
    return float(np.sum(pmf * i / (2 * k - i)))


def random_baseline_jaccard(k: int, d: int, draws: int = 100_000, seed: int = 0) -> float:
    """Monte-Carlo estimate of :func:`expected_random_jaccard`."""
    if not 1 <= k <= d:
        raise ValueError(f"Need 1 <= k <= d, got k={k}, d={d}")
    rng = np.random.default_rng(seed)
    picks = np.argsort(rng.random((draws, d)), axis=1)[:, :k]
    overlap = np.sum(picks < k, axis=1)
    return float(np.mean(overlap / (2 * k - overlap)))


# -------------------------------------------------------------------
# Synthetic images
# -------------------------------------------------------------------


def _segment_distance(yy: np.ndarray, xx: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    length_sq = float(ab @ ab) or 1.0
    t = np.clip(((yy - a[0]) * ab[0] + (xx - a[1]) * ab[1]) / length_sq, 0.0, 1.0)
    return np.hypot(yy - (a[0] + t * ab[0]), xx - (a[1] + t * ab[1]))


def synthetic_digit(height: int = 28, width: int = 28, seed: int = 0) -> Image:
    """Bright pen strokes on a black background, loosely digit-like."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    margin = np.array([height, width]) * 0.2
    points = rng.uniform(margin, np.array([height, width]) - margin, size=(int(rng.integers(3, 6)), 2))
    pen = rng.uniform(0.9, 1.4)

    canvas = np.zeros((height, width))
    for a, b in zip(points[:-1], points[1:]):
        dist = _segment_distance(yy, xx, a, b)
        canvas = np.maximum(canvas, np.exp(-(dist**2) / (2 * pen**2)))
    canvas[canvas < 0.05] = 0.0
    return Image.from_array(canvas)


def synthetic_texture(height: int = 28, width: int = 28, channels: int = 1, seed: int = 0) -> Image:
    """Smooth random waves plus fine noise, rescaled to [0.1, 0.9] per channel."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)

    out = np.empty((height, width, channels))
    for c in range(channels):
        field_ = np.zeros((height, width))
        for _ in range(4):
            theta = rng.uniform(0, np.pi)
            freq = rng.uniform(0.5, 3.0)
            phase = rng.uniform(0, 2 * np.pi)
            field_ += rng.uniform(0.5, 1.0) * np.sin(
                2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase
            )
        field_ += 0.15 * rng.standard_normal((height, width))
        lo, hi = field_.min(), field_.max()
        out[:, :, c] = 0.1 + 0.8 * (field_ - lo) / (hi - lo if hi > lo else 1.0)
    return Image.from_array(out)


# -------------------------------------------------------------------
# Configuration
# -------------------------------------------------------------------


Segmenter = Literal["grid", "quickshift"]

DEFAULT_SYNTHETIC: dict[str, Any] = {"kind": "texture", "count": 20, "height": 28, "width": 28}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict[str, Any] | None = None
    model_path: str | None = None
    images: tuple[str, ...] = ()
    synthetic: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_SYNTHETIC))
    channels: int = 1
    segmenter: Segmenter = "grid"
    grid: GridParams = GridParams(4, 4)
    quickshift: QuickshiftParams = QuickshiftParams()
    replacement: ReplacementSpec = ReplacementSpec()
    lime: LimeConfig = LimeConfig()
    ig_steps: int = DEFAULT_IG_STEPS
    fd_fallback: bool = False
    jaccard_ks: tuple[int, ...] = DEFAULT_JACCARD_KS
    repetitions: int = 1
    out_dir: str | None = None

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError(f"Repetitions must be >= 1, got {self.repetitions}")
        if not self.jaccard_ks or any(k < 1 for k in self.jaccard_ks):
            raise ValueError(f"Jaccard k values must be >= 1, got {self.jaccard_ks}")
        if self.ig_steps < 1:
            raise ValueError(f"IG steps must be >= 1, got {self.ig_steps}")
        if self.segmenter not in ("grid", "quickshift"):
            raise ValueError(f"Unknown segmenter {self.segmenter!r}")
        if self.model is None and self.model_path is None:
            raise ValueError("Experiment needs a model spec or a model path")
        if not self.images and not self.synthetic:
            raise ValueError("Experiment needs image paths or a synthetic generator")

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        def resolve(p: str) -> str:
            path = Path(p)
            return str(base_dir / path) if base_dir is not None and not path.is_absolute() else p

        grid = d.get("grid", {})
        qs = d.get("quickshift", {})
        lime = d.get("lime", {})
        channels = int(d.get("channels", 1))
        replacement = d.get("replacement", {})
        if replacement == "black":
            replacement = ReplacementSpec.black(channels).to_dict()
        elif isinstance(replacement, str):
            replacement = {"mode": replacement}
        synthetic = d.get("synthetic")
        if synthetic is None:
            synthetic = {} if d.get("images") else DEFAULT_SYNTHETIC
        return cls(
            model=d.get("model"),
            model_path=resolve(d["model_path"]) if d.get("model_path") else None,
            images=tuple(resolve(p) for p in d.get("images", ())),
            synthetic=dict(synthetic),
            channels=channels,
            segmenter=d.get("segmenter", "grid"),
            grid=GridParams(int(grid.get("rows", 4)), int(grid.get("cols", 4))),
            quickshift=QuickshiftParams(**{k: float(v) for k, v in qs.items()}),
            replacement=ReplacementSpec.from_dict(replacement),
            lime=LimeConfig.from_dict(lime),
            ig_steps=int(d.get("ig_steps", DEFAULT_IG_STEPS)),
            fd_fallback=bool(d.get("fd_fallback", False)),
            jaccard_ks=tuple(int(k) for k in d.get("jaccard_ks", DEFAULT_JACCARD_KS)),
            repetitions=int(d.get("repetitions", 1)),
            out_dir=d.get("out_dir"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "model_path": self.model_path,
            "images": list(self.images),
            "synthetic": self.synthetic,
            "channels": self.channels,
            "segmenter": self.segmenter,
            "grid": {"rows": self.grid.rows, "cols": self.grid.cols},
            "quickshift": {
                "ratio": self.quickshift.ratio,
                "kernel_size": self.quickshift.kernel_size,
                "max_dist": self.quickshift.max_dist,
            },
            "replacement": self.replacement.to_dict(),
            "lime": self.lime.to_dict(),
            "ig_steps": self.ig_steps,
            "fd_fallback": self.fd_fallback,
            "jaccard_ks": list(self.jaccard_ks),
            "repetitions": self.repetitions,
            "out_dir": self.out_dir,
        }

    def output_dir(self) -> Path:
        return Path(self.out_dir) if self.out_dir else OUTPUTS_DIR


def load_images(config: ExperimentConfig) -> list[tuple[str, Image]]:
    if config.images:
        return [(Path(p).stem, read_image(Path(p), channels=config.channels)) for p in config.images]

    spec = config.synthetic
    kind = spec.get("kind", "texture")
    count = int(spec.get("count", 1))
    h, w = int(spec.get("height", 28)), int(spec.get("width", 28))
    seed = int(spec.get("seed", 0))
    if kind == "digit":
        return [(f"digit_{i}", synthetic_digit(h, w, seed + i)) for i in range(count)]
    if kind == "texture":
        channels = int(spec.get("channels", config.channels))
        return [(f"texture_{i}", synthetic_texture(h, w, channels, seed + i)) for i in range(count)]
    raise ValueError(f"Unknown synthetic image kind {kind!r}")


def segment_image(config: ExperimentConfig, image: Image) -> SuperpixelPartition:
    if config.segmenter == "grid":
        return grid_segment(image.height, image.width, config.grid)
    return quickshift_segment(image, config.quickshift)


def build_model(config: ExperimentConfig, image: Image) -> BlackBoxModel:
    if config.model_path:
        return load_model(Path(config.model_path), image.height, image.width, image.channels)
    return model_from_spec(config.model or {}, image.height, image.width, image.channels)


# -------------------------------------------------------------------
# LIME vs integrated gradients
# -------------------------------------------------------------------


@dataclass
class ComparisonRow:
    image: str
    repetition: int
    seed: int
    d: int
    lime_top: dict[int, list[int]]
    ig_top: dict[int, list[int]]
    jaccard: dict[int, float]

    def to_dict(self) -> dict:
        return {
            "image": self.image,
            "repetition": self.repetition,
            "seed": self.seed,
            "d": self.d,
            "lime_top": {str(k): v for k, v in self.lime_top.items()},
            "ig_top": {str(k): v for k, v in self.ig_top.items()},
            "jaccard": {str(k): v for k, v in self.jaccard.items()},
        }


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    failures: list[dict[str, Any]]
    config: dict[str, Any]

    def mean_jaccard(self, k: int) -> float | None:
        values = [r.jaccard[k] for r in self.rows if k in r.jaccard]
        return float(np.mean(values)) if values else None

    def aggregate(self) -> dict[str, float | None]:
        return {f"J{k}": self.mean_jaccard(k) for k in self.config.get("jaccard_ks", [])}

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate(),
            "rows": [r.to_dict() for r in self.rows],
            "failures": self.failures,
            "config": self.config,
        }

    def to_dataframe(self) -> pd.DataFrame:
        records = []
        for r in self.rows:
            rec: dict[str, Any] = {"image": r.image, "repetition": r.repetition, "seed": r.seed, "d": r.d}
            rec.update({f"J{k}": v for k, v in r.jaccard.items()})
            records.append(rec)
        return pd.DataFrame(records)


def _unit_seed(config: ExperimentConfig, image_index: int, repetition: int) -> int:
    return config.lime.seed + image_index * config.repetitions + repetition


def run_comparison(config: ExperimentConfig, threads: int = 1) -> ComparisonReport:
    """LIME vs β_apx top-k agreement for every (image, repetition)."""
    images = load_images(config)
    prepared: dict[int, tuple] = {}
    failures: list[dict[str, Any]] = []

    for idx, (name, image) in enumerate(images):
        try:
            partition = segment_image(config, image)
            partition.require_multiple()
            model = build_model(config, image)
            baseline = compute_replacement(image, partition, config.replacement)
            ig = averaged_gradient(
                model, image, baseline, config.ig_steps, fallback=config.fd_fallback
            )
            apx = approx_explanation(ig, image, baseline, partition, model)
            prepared[idx] = (name, image, partition, model, apx)
        except (ValueError, ArithmeticError) as exc:
            log.warning("Skipping image %s: %s", name, exc)
            failures.append({"image": name, "repetition": None, "error": str(exc)})

    units = [(idx, rep) for idx in sorted(prepared) for rep in range(config.repetitions)]

    def run(unit: tuple[int, int]) -> ComparisonRow | dict[str, Any]:
        idx, rep = unit
        name, image, partition, model, apx = prepared[idx]
        seed = _unit_seed(config, idx, rep)
        try:
            lime = explain(
                image, partition, config.replacement, model, replace(config.lime, seed=seed, threads=1)
            )
        except (ValueError, ArithmeticError) as exc:
            log.warning("LIME failed on %s (repetition %d): %s", name, rep, exc)
            return {"image": name, "repetition": rep, "error": str(exc)}
        lime_top = {k: top_k_positive(lime, k) for k in config.jaccard_ks}
        ig_top = {k: top_k_positive(apx, k) for k in config.jaccard_ks}
        scores = {k: jaccard(lime_top[k], ig_top[k]) for k in config.jaccard_ks}
        return ComparisonRow(name, rep, seed, partition.d, lime_top, ig_top, scores)

    rows: list[ComparisonRow] = []
    for result in map_ordered(run, units, threads):
        if isinstance(result, ComparisonRow):
            rows.append(result)
        else:
            failures.append(result)

    report = ComparisonReport(rows, failures, config.to_dict())
    log.info(
        "Comparison over %d runs (%d failures): %s", len(rows), len(failures), report.aggregate()
    )
    return report


# -------------------------------------------------------------------
# Concentration
# -------------------------------------------------------------------


@dataclass
class ConcentrationResult:
    """β̂ samples over repeated seeds next to the limit explanation."""

    samples: np.ndarray
    seeds: list[int]
    n: int
    theory: ExplanationVector | None = None

    @property
    def d(self) -> int:
        return int(self.samples.shape[1]) - 1

    def coefficient_std(self) -> np.ndarray:
        """Std of each of β̂_0, …, β̂_d across seeds."""
        return self.samples.std(axis=0, ddof=1) if len(self.seeds) > 1 else np.zeros(self.d + 1)

    def summary(self) -> pd.DataFrame:
        """One row per superpixel (0 = intercept): median, mean, std and β^f."""
        theory = self.theory.as_array() if self.theory is not None else np.full(self.d + 1, np.nan)
        return pd.DataFrame(
            {
                "superpixel": np.arange(self.d + 1),
                "median": np.median(self.samples, axis=0),
                "mean": self.samples.mean(axis=0),
                "std": self.coefficient_std(),
                "theory": theory,
            }
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "seeds": self.seeds,
            "samples": self.samples.tolist(),
            "theory": self.theory.to_dict() if self.theory is not None else None,
        }


def limit_explanation(
    model: BlackBoxModel,
    image: Image,
    replacement: Image,
    partition: SuperpixelPartition,
    nu: float,
) -> ExplanationVector | None:
    """β^f from the closed form when one exists, else from exact moments."""
    if isinstance(model, ShapeDetector):
        return beta_shape_detector(partition, model.shape_pixels, model.tau, image, replacement, nu)
    if isinstance(model, LinearModel):
        return beta_linear(model, image, replacement, partition)
    if partition.d <= MAX_ENUMERATION_D:
        gamma = moments_exact(model, image, replacement, partition, nu)
        return beta_from_moments(gamma, partition.d, nu)
    return None


def run_concentration(config: ExperimentConfig, threads: int = 1) -> ConcentrationResult:
    """Repeat LIME ``repetitions`` times on the first image with seeds seed, seed+1, …"""
    name, image = load_images(config)[0]
    partition = segment_image(config, image)
    partition.require_multiple()
    model = build_model(config, image)
    replacement = compute_replacement(image, partition, config.replacement)
    seeds = [config.lime.seed + r for r in range(config.repetitions)]

    def run(seed: int) -> np.ndarray:
        cfg = replace(config.lime, seed=seed, threads=1)
        return explain(image, partition, config.replacement, model, cfg).as_array()

    samples = np.vstack(map_ordered(run, seeds, threads))
    theory = limit_explanation(model, image, replacement, partition, config.lime.bandwidth)
    log.info("Concentration on %s: d=%d, %d repetitions at n=%d", name, partition.d, len(seeds), config.lime.n)
    return ConcentrationResult(samples, seeds, config.lime.n, theory)


# -------------------------------------------------------------------
# Reports
# -------------------------------------------------------------------


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_report(payload: dict[str, Any]) -> str:
    """Deterministic JSON: insertion-ordered keys, shortest round-trip floats."""
    return json.dumps(_plain(payload), indent=2, allow_nan=True)


def save_report(
    payload: dict[str, Any],
    label: str,
    output_dir: Path | None = None,
    tables: dict[str, pd.DataFrame] | None = None,
) -> Path:
    """Write ``<label>.json`` and one ``<label>_<name>.csv`` per table. Returns the JSON path."""
    ensure_dirs()
    out = Path(output_dir) if output_dir else OUTPUTS_DIR
    out.mkdir(parents=True, exist_ok=True)

    json_path = out / f"{label}.json"
    json_path.write_text(dumps_report(payload) + "\n", encoding="utf-8")
    for name, df in (tables or {}).items():
        df.to_csv(out / f"{label}_{name}.csv", index=False, float_format="%.17g")

    log.info("Saved %s report to %s", label, out)
    return json_path


def write_boxplot_data(result: ConcentrationResult, path: Path) -> Path:
    """Whitespace table for gnuplot: superpixel, β^f, then one column per seed."""
    path = Path(path)
    theory = result.theory.as_array() if result.theory is not None else np.full(result.d + 1, np.nan)
    header = "# superpixel theory " + " ".join(f"seed_{s}" for s in result.seeds)
    lines = [header]
    for j in range(1, result.d + 1):
        values = " ".join(repr(float(v)) for v in result.samples[:, j])
        lines.append(f"{j} {float(theory[j])!r} {values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
