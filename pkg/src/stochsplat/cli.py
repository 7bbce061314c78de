"""Command-line entry point: one subcommand per experiment mode."""

from __future__ import annotations

import argparse
import sys

from .experiments import MODES, ExperimentConfig, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochsplat",
        description="Closed-loop uncertainty-guided view and illumination planning experiments.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a {mode} experiment")
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--seed", type=int, help="experiment seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--gt-primitives", type=int, dest="gt_primitives")
        p.add_argument("--fit-primitives", type=int, dest="fit_primitives")
        p.add_argument("--rounds", type=int)
        p.add_argument("--iterations-per-round", type=int, dest="iterations_per_round")
        p.add_argument("--fit-iterations", type=int, dest="fit_iterations")
        p.add_argument("--rank", type=int)
        p.add_argument("--variant")
        p.add_argument("--resolution", type=int, help="square image size in pixels")
        p.add_argument("--scene-file", dest="scene_file")
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = {
        "mode": args.mode,
        "seed": args.seed,
        "out_dir": args.out,
        "gt_primitives": args.gt_primitives,
        "fit_primitives": args.fit_primitives,
        "rounds": args.rounds,
        "iterations_per_round": args.iterations_per_round,
        "fit_iterations": args.fit_iterations,
        "rank": args.rank,
        "variant": args.variant,
        "scene_file": args.scene_file,
    }
    if args.resolution is not None:
        overrides["width"] = args.resolution
        overrides["height"] = args.resolution
    if args.config:
        return ExperimentConfig.from_json(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report = run(config_from_args(args))
    if report.failed_arms:
        print(f"failed arms: {', '.join(report.failed_arms)}", file=sys.stderr)
        return 1
    print(f"{args.mode}: {len(report.rows)} report rows, artifacts in {report.manifest[0]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
