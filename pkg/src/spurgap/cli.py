"""Command-line interface.

Subcommands:
  sweep     run a gap-grid sweep from a JSON config (or the built-in default)
  render    turn sweep CSVs into heatmap images
  validate  run the Monte Carlo agreement suite; exit 0 only if it passes
  solve     inspect the fixed-point solution of a single configuration

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

import argparse
import json
import sys
from pathlib import Path

from .perturbation import ThreatModel
from .sweep import ConfigError, GapGrid, ExperimentPoint, Pipeline, load_config, run_point, run_sweep
from .validation import run_agreement_suite

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spurgap",
        description="Accuracy-gap experiments for adversarial perturbations "
                    "on spuriously correlated Gaussian data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run a gap-grid sweep")
    sweep.add_argument("--config", type=Path, default=None,
                       help="JSON config file (defaults to the built-in grid)")
    sweep.add_argument("--out", type=Path, default=Path("sweep_out"),
                       help="output directory for CSVs and manifest")
    sweep.add_argument("--pipeline", default=None,
                       help="override the pipeline axis (theory|proxy|advtrain)")
    sweep.add_argument("--threat", default=None,
                       help="override the threat axis (l2|linf)")
    sweep.add_argument("--seed", type=int, default=None,
                       help="override the base seed")
    sweep.add_argument("--jobs", type=int, default=1,
                       help="parallel workers for grid cells")

    render = sub.add_parser("render", help="render sweep CSVs as heatmaps")
    render.add_argument("grids", nargs="+", type=Path, help="gap CSV files")
    render.add_argument("--out", type=Path, default=None,
                        help="directory for images (default: next to each CSV)")

    validate = sub.add_parser("validate",
                              help="closed-form vs Monte Carlo agreement suite")
    validate.add_argument("--configs", type=int, default=28,
                          help="randomized configurations per comparison family")
    validate.add_argument("--samples", type=int, default=10**6,
                          help="Monte Carlo draws per comparison")
    validate.add_argument("--seed", type=int, default=20240)
    validate.add_argument("--out", type=Path, default=None,
                          help="directory for the CSV report")

    solve = sub.add_parser("solve", help="solve one configuration's coefficients")
    solve.add_argument("--mu1", type=float, required=True)
    solve.add_argument("--mu2", type=float, required=True)
    solve.add_argument("--zeta", type=float, required=True)
    solve.add_argument("--eps", type=float, default=0.01,
                       help="linf-scale budget (l2 runs scale it by sqrt(d))")
    solve.add_argument("--threat", default="linf")
    return parser


def _cmd_sweep(args) -> int:
    config = load_config(args.config) if args.config else load_config({})
    if args.pipeline is not None:
        config["pipeline"] = [Pipeline.coerce(args.pipeline).value]
    if args.threat is not None:
        config["threat"] = [ThreatModel.coerce(args.threat).value]
    if args.seed is not None:
        config["seed"] = args.seed
    manifest = run_sweep(config, args.out, jobs=args.jobs)
    failed = sum(entry["failed_cells"] for entry in manifest["files"])
    print(f"wrote {len(manifest['files'])} grid files to {args.out}"
          + (f" ({failed} failed cells)" if failed else ""))
    return 0


def _cmd_render(args) -> int:
    from .heatmap import render_heatmap  # deferred: pulls in matplotlib

    for grid_path in args.grids:
        grid = GapGrid.from_csv(grid_path)
        out_dir = args.out if args.out is not None else grid_path.parent
        out_dir.mkdir(parents=True, exist_ok=True)
        target = out_dir / (grid_path.stem + ".svg")
        render_heatmap(grid, target)
        print(f"rendered {target}")
    return 0


def _cmd_validate(args) -> int:
    report = run_agreement_suite(
        configs_per_family=args.configs, n_samples=args.samples, seed=args.seed
    )
    print(report.summary())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        report.write_csv(args.out / "agreement_report.csv")
        print(f"report written to {args.out / 'agreement_report.csv'}")
    return 0 if report.passed else 1


def _cmd_solve(args) -> int:
    point = ExperimentPoint(
        mu1=args.mu1, mu2=args.mu2, zeta=args.zeta, eps_inf=args.eps,
        threat=args.threat, pipeline=Pipeline.THEORY,
    )
    from .theory import theoretical_gap

    report = theoretical_gap(point.population(), point.eps_inf, point.threat)
    payload = {
        "mu1": args.mu1,
        "mu2": args.mu2,
        "zeta": args.zeta,
        "eps_inf": args.eps,
        "eps_applied": report.direction.eps,
        "threat": report.direction.threat.value,
        "tau": report.tau.to_dict(),
        "c": report.c.to_dict(),
        "clean_balanced_accuracy": report.clean_balanced,
        "perturbed_balanced_accuracy": report.perturbed_balanced,
        "gap": report.gap,
    }
    print(json.dumps(payload, indent=2))
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "sweep": _cmd_sweep,
        "render": _cmd_render,
        "validate": _cmd_validate,
        "solve": _cmd_solve,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
