"""CLI entry point: segmentation, LIME, limit explanations, integrated gradients and experiments."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np

from superpixel_lime.utils.config import OUTPUTS_DIR, ensure_dirs, load_config
from superpixel_lime.utils.logging import get_logger, setup_logging

log = get_logger("cli")

EXIT_OK = 0
EXIT_INVALID_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_SELFTEST = 3


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out_dir) if args.out_dir else OUTPUTS_DIR
    ensure_dirs(out)
    return out


def _file_config(args: argparse.Namespace) -> dict[str, Any]:
    return load_config(Path(args.config)) if args.config else {}


def _load_image(args: argparse.Namespace):
    from superpixel_lime.core.imageio import read_image

    return read_image(Path(args.image), channels=args.channels)


def _partition(args: argparse.Namespace, image, multiple: bool = True):
    from superpixel_lime.core.imageio import read_partition
    from superpixel_lime.core.segmentation import (
        GridParams,
        QuickshiftParams,
        grid_segment,
        quickshift_segment,
    )

    if getattr(args, "partition", None):
        partition = read_partition(Path(args.partition))
        partition.require_covers(image)
        return partition
    if args.segmenter == "grid":
        return grid_segment(image.height, image.width, GridParams(args.rows, args.cols))
    partition = quickshift_segment(image, QuickshiftParams(args.ratio, args.kernel_size, args.max_dist))
    if multiple and partition.d < 2:
        raise ValueError(
            f"Quickshift found d={partition.d} superpixel at --ratio {args.ratio:g}; "
            "raise --ratio (pixel values live in [0, 1]), lower --kernel-size, or use --segmenter grid"
        )
    return partition


def _replacement_spec(args: argparse.Namespace, channels: int):
    from superpixel_lime.core.image import ReplacementSpec

    if args.replacement == "mean":
        return ReplacementSpec()
    if args.replacement == "black":
        return ReplacementSpec.black(channels)
    if not args.color or len(args.color) != channels:
        raise ValueError(f"--replacement solid needs --color with {channels} component(s)")
    return ReplacementSpec.solid(*args.color)


def _lime_config(args: argparse.Namespace):
    from superpixel_lime.core.explainer import LimeConfig

    values = dict(_file_config(args).get("lime", {}))
    flags = {
        "n": getattr(args, "n", None),
        "bandwidth": getattr(args, "nu", None),
        "ridge": getattr(args, "ridge", None),
        "seed": args.seed,
        "top_k": getattr(args, "top_k", None),
        "batch_size": getattr(args, "batch_size", None),
        "threads": args.threads,
    }
    values.update({k: v for k, v in flags.items() if v is not None})
    return LimeConfig.from_dict(values)


def _model(args: argparse.Namespace, image):
    from superpixel_lime.core.blackbox import load_model

    return load_model(Path(args.model), image.height, image.width, image.channels)


# -------------------------------------------------------------------
# Commands
# -------------------------------------------------------------------


def cmd_segment(args: argparse.Namespace) -> int:
    """Segment an image and save the partition."""
    from superpixel_lime.core.imageio import write_partition

    image = _load_image(args)
    partition = _partition(args, image, multiple=False)
    out = Path(args.output) if args.output else _out_dir(args) / f"{Path(args.image).stem}_partition.csv"
    write_partition(partition, out)
    sizes = partition.sizes()
    print(f"d={partition.d} superpixels (sizes {sizes.min()}..{sizes.max()})")
    if partition.d < 2:
        print("Only one superpixel: raise --ratio or use --segmenter grid before explaining")
    print(f"Partition saved to: {out}")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    """Run LIME on one image."""
    from superpixel_lime.core.experiments import save_report
    from superpixel_lime.core.explainer import explain, top_k_negative

    image = _load_image(args)
    partition = _partition(args, image)
    spec = _replacement_spec(args, image.channels)
    config = _lime_config(args)
    model = _model(args, image)

    expl = explain(image, partition, spec, model, config)
    top = expl.metadata.pop("top_k")
    negative = top_k_negative(expl, config.top_k)

    print(f"\nIntercept: {expl.intercept:.6g}")
    print(f"Top-{config.top_k} positive superpixels: {top}")
    for j in top:
        print(f"  {j:>4}  {expl.coefficient(j):+.6g}")

    label = f"{Path(args.image).stem}_lime"
    settings = expl.metadata.pop("config")
    payload = {**expl.to_dict(), "top_k": top, "top_k_negative": negative, "config": settings}
    path = save_report(payload, label, _out_dir(args), {"coefficients": expl.to_dataframe()})
    print(f"\nExplanation saved to: {path}")
    return EXIT_OK


def cmd_limit(args: argparse.Namespace) -> int:
    """Compute the limit explanation β^f."""
    from superpixel_lime.core.coefficients import (
        covariance_tail_bound,
        min_sample_size,
        moment_tail_bound,
        sigma_inverse_frobenius,
    )
    from superpixel_lime.core.experiments import limit_explanation, save_report
    from superpixel_lime.core.image import compute_replacement
    from superpixel_lime.core.limits import (
        beta_from_moments,
        beta_infinity,
        moments_exact,
        moments_monte_carlo,
    )

    image = _load_image(args)
    partition = _partition(args, image)
    partition.require_multiple()
    replacement = compute_replacement(image, partition, _replacement_spec(args, image.channels))
    model = _model(args, image)
    nu = args.nu if args.nu is not None else _lime_config(args).bandwidth
    seed = args.seed if args.seed is not None else 0

    if args.infinity:
        est = "exact" if args.estimator != "monte-carlo" else "monte-carlo"
        expl = beta_infinity(model, image, replacement, partition, est, args.n or 10_000, seed, args.threads)
    elif args.estimator == "closed-form":
        expl = limit_explanation(model, image, replacement, partition, nu)
        if expl is None:
            raise ValueError("No closed form for this model at this d; use --estimator monte-carlo")
    elif args.estimator == "exact":
        gamma = moments_exact(model, image, replacement, partition, nu, args.threads)
        expl = beta_from_moments(gamma, partition.d, nu)
    else:
        gamma = moments_monte_carlo(
            model, image, replacement, partition, nu, args.n or 10_000, seed, threads=args.threads
        )
        expl = beta_from_moments(gamma, partition.d, nu)

    payload = expl.to_dict()
    if args.eps is not None:
        bound = model.bound if model.bound is not None else 1.0
        d = partition.d
        n_min = min_sample_size(bound, args.eps, args.eta, d, nu)
        # deviations keeping ‖Σ̂⁻¹‖ <= 2‖Σ⁻¹‖ and the β error <= eps
        inv_norm = sigma_inverse_frobenius(d, nu)
        t_sigma = 1.0 / (2.0 * inv_norm)
        t_gamma = args.eps / (2.0 * inv_norm)
        payload["min_sample_size"] = n_min
        payload["bounds"] = {
            "sigma_inverse_frobenius": inv_norm,
            "covariance_deviation": t_sigma,
            "covariance_tail": covariance_tail_bound(n_min, d, t_sigma),
            "moment_deviation": t_gamma,
            "moment_tail": moment_tail_bound(n_min, d, t_gamma, bound),
        }
        print(f"Sample size for eps={args.eps:g}, eta={args.eta:g}: {n_min:,}")
        print(f"  ||Sigma^-1||_F = {inv_norm:.6g}")

    print(f"\nIntercept: {expl.intercept:.6g}")
    for j in range(1, expl.d + 1):
        print(f"  {j:>4}  {expl.coefficient(j):+.6g}")
    path = save_report(
        payload, f"{Path(args.image).stem}_limit", _out_dir(args), {"coefficients": expl.to_dataframe()}
    )
    print(f"\nLimit explanation saved to: {path}")
    return EXIT_OK


def cmd_ig(args: argparse.Namespace) -> int:
    """Integrated-gradients approximation β_apx."""
    import pandas as pd

    from superpixel_lime.core.experiments import save_report
    from superpixel_lime.core.gradients import approx_explanation, averaged_gradient, path_predictions
    from superpixel_lime.core.image import compute_replacement

    image = _load_image(args)
    partition = _partition(args, image)
    replacement = compute_replacement(image, partition, _replacement_spec(args, image.channels))
    model = _model(args, image)

    ig = averaged_gradient(
        model, image, replacement, args.steps, fallback=args.fd_fallback, threads=args.threads
    )
    expl = approx_explanation(ig, image, replacement, partition, model)

    out = _out_dir(args)
    label = f"{Path(args.image).stem}_ig"
    path = save_report(expl.to_dict(), label, out, {"coefficients": expl.to_dataframe()})
    if args.dump_ig:
        rows = ig.values.reshape(image.height, image.width * image.channels)
        pd.DataFrame(rows).to_csv(out / f"{label}_pixels.csv", header=False, index=False, float_format="%.17g")
    if args.dump_path:
        path_predictions(model, image, replacement, args.steps).to_csv(
            out / f"{label}_path.csv", index=False, float_format="%.17g"
        )

    print(f"\nSum of beta_apx: {expl.coefficients.sum():.6g}")
    print(f"Approximate explanation saved to: {path}")
    return EXIT_OK


def _experiment_config(args: argparse.Namespace):
    from superpixel_lime.core.experiments import ExperimentConfig

    if not args.config:
        raise ValueError(f"'{args.command}' needs --config")
    raw = _file_config(args)
    config = ExperimentConfig.from_dict(raw, base_dir=Path(args.config).parent)
    if args.seed is not None:
        config = replace(config, lime=replace(config.lime, seed=args.seed))
    if args.out_dir:
        config = replace(config, out_dir=args.out_dir)
    return config


def cmd_compare(args: argparse.Namespace) -> int:
    """LIME vs integrated gradients top-k agreement."""
    from superpixel_lime.core.experiments import expected_random_jaccard, run_comparison, save_report

    config = _experiment_config(args)
    report = run_comparison(config, threads=args.threads)

    print(f"\n{len(report.rows)} runs, {len(report.failures)} failures")
    d = min((r.d for r in report.rows), default=0)
    for k in config.jaccard_ks:
        value = report.mean_jaccard(k)
        shown = f"{value:.3f}" if value is not None else "n/a"
        baseline = f"{expected_random_jaccard(k, d):.3f}" if k <= d else "n/a"
        print(f"  J{k}: {shown}  (random baseline at d={d}: {baseline})")

    path = save_report(report.to_dict(), "comparison", config.output_dir(), {"jaccard": report.to_dataframe()})
    print(f"\nReport saved to: {path}")
    return EXIT_OK


def cmd_concentration(args: argparse.Namespace) -> int:
    """Repeated LIME runs next to the limit explanation."""
    from superpixel_lime.core.experiments import run_concentration, save_report, write_boxplot_data

    config = _experiment_config(args)
    result = run_concentration(config, threads=args.threads)
    summary = result.summary()
    print(summary.to_string(index=False))

    out = config.output_dir()
    path = save_report(result.to_dict(), "concentration", out, {"summary": summary})
    write_boxplot_data(result, out / "concentration_boxplot.dat")
    print(f"\nReport saved to: {path}")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    """Run every oracle and identity suite."""
    from superpixel_lime.core.selftest import run_selftest

    report = run_selftest(sigma2_shift=args.perturb_sigma2)
    print(report.to_dataframe().to_string(index=False))
    if not report.passed:
        print(f"\nFailed suites: {', '.join(report.failed())}")
        return EXIT_SELFTEST
    print("\nAll suites passed")
    return EXIT_OK


# -------------------------------------------------------------------
# Parser
# -------------------------------------------------------------------


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed")
    common.add_argument("--out-dir", default=None, help="Output directory (default outputs/)")
    common.add_argument("--threads", type=int, default=1, help="Worker threads")
    common.add_argument("--config", default=None, help="YAML/JSON config file")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def _add_image_args(p: argparse.ArgumentParser, partition: bool = True) -> None:
    p.add_argument("image", help="Image file (PGM, PPM or CSV)")
    p.add_argument("--channels", type=int, default=1, choices=[1, 3], help="Channels of a CSV image")
    if partition:
        p.add_argument("--partition", default=None, help="Partition CSV (skips segmentation)")
    p.add_argument("--segmenter", choices=["quickshift", "grid"], default="quickshift")
    p.add_argument("--rows", type=int, default=4, help="Grid rows")
    p.add_argument("--cols", type=int, default=4, help="Grid columns")
    p.add_argument("--ratio", type=float, default=1.0, help="Quickshift color/space ratio")
    p.add_argument("--kernel-size", type=float, default=5.0, help="Quickshift density bandwidth")
    p.add_argument("--max-dist", type=float, default=10.0, help="Quickshift maximum link length")


def _add_replacement_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replacement", choices=["mean", "black", "solid"], default="mean")
    p.add_argument("--color", type=float, nargs="+", default=None, help="Solid replacement color")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="superpixel-lime",
        description="LIME for images, its limit explanations, and integrated-gradients comparisons.",
        epilog="--seed, --out-dir, --threads, --config and -v are accepted by every command.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    # segment
    p_seg = sub.add_parser("segment", help="Segment an image into superpixels", parents=[common])
    _add_image_args(p_seg, partition=False)
    p_seg.add_argument("--output", default=None, help="Partition CSV path")
    p_seg.set_defaults(func=cmd_segment)

    # explain
    p_exp = sub.add_parser("explain", help="Run LIME on an image", parents=[common])
    _add_image_args(p_exp)
    _add_replacement_args(p_exp)
    p_exp.add_argument("--model", required=True, help="Model spec file (JSON/YAML)")
    p_exp.add_argument("-n", type=int, default=None, help="Number of perturbed samples")
    p_exp.add_argument("--nu", type=float, default=None, help="Kernel bandwidth")
    p_exp.add_argument("--ridge", type=float, default=None, help="Ridge penalty")
    p_exp.add_argument("-k", "--top-k", type=int, default=None, help="Top coefficients to report")
    p_exp.add_argument("--batch-size", type=int, default=None, help="Model batch size")
    p_exp.set_defaults(func=cmd_explain)

    # limit
    p_lim = sub.add_parser("limit", help="Limit explanation beta^f", parents=[common])
    _add_image_args(p_lim)
    _add_replacement_args(p_lim)
    p_lim.add_argument("--model", required=True, help="Model spec file (JSON/YAML)")
    p_lim.add_argument("--nu", type=float, default=None, help="Kernel bandwidth")
    p_lim.add_argument(
        "--estimator", choices=["closed-form", "exact", "monte-carlo"], default="closed-form"
    )
    p_lim.add_argument("-n", type=int, default=None, help="Monte-Carlo sample count")
    p_lim.add_argument("--infinity", action="store_true", help="Large-bandwidth limit")
    p_lim.add_argument("--eps", type=float, default=None, help="Also report the sample-size bound")
    p_lim.add_argument("--eta", type=float, default=0.05, help="Failure probability for --eps")
    p_lim.set_defaults(func=cmd_limit)

    # ig
    p_ig = sub.add_parser("ig", help="Integrated-gradients explanation", parents=[common])
    _add_image_args(p_ig)
    _add_replacement_args(p_ig)
    p_ig.add_argument("--model", required=True, help="Model spec file (JSON/YAML)")
    p_ig.add_argument("-m", "--steps", type=int, default=20, help="Riemann-sum steps")
    p_ig.add_argument("--fd-fallback", action="store_true", help="Finite differences if no gradient")
    p_ig.add_argument("--dump-ig", action="store_true", help="Also write per-pixel IG as CSV")
    p_ig.add_argument("--dump-path", action="store_true", help="Also write f along the path as CSV")
    p_ig.set_defaults(func=cmd_ig)

    # compare / concentration
    p_cmp = sub.add_parser("compare", help="LIME vs integrated gradients (Jaccard)", parents=[common])
    p_cmp.set_defaults(func=cmd_compare)
    p_con = sub.add_parser("concentration", help="Spread of LIME over seeds", parents=[common])
    p_con.set_defaults(func=cmd_concentration)

    # selftest
    p_st = sub.add_parser("selftest", help="Run the oracle suites", parents=[common])
    p_st.add_argument("--perturb-sigma2", type=float, default=0.0, help=argparse.SUPPRESS)
    p_st.set_defaults(func=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    try:
        return args.func(args)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        log.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, KeyError, NotImplementedError) as exc:
        log.error("Invalid input: %s", exc)
        return EXIT_INVALID_INPUT


if __name__ == "__main__":
    sys.exit(main())
