"""Command-line interface.

    curves ingest   --config cfg.txt
    curves estimate --config cfg.txt [--seed N] [--lambda-policy n|const:<v>]
                    [--aggregation pool|median]
    curves tenors   --config cfg.txt [--tenors 90,180,360]
    curves plot     --config cfg.txt
    curves synth    --config cfg.txt [--truth spec.txt] [--seed N]

Set CURVES_LOG=debug|info|warning|error to control verbosity.  Exit code 0
on success; 1 with an ``error: ...`` line on stderr otherwise.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ConfigError, apply_overrides, load_pipeline_config, load_truth_spec
from .errors import CurveError
from .pipeline import run_estimate, run_ingest, run_synth, run_tenors


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curves",
        description="implied yield curves from inverse option and futures quotes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "validate input CSVs and write per-day store partitions"),
        ("estimate", "estimate daily discount factors and rates per expiry"),
        ("tenors", "interpolate fixed-tenor rate series from curves.csv"),
        ("plot", "render curve and tenor SVG figures"),
        ("synth", "generate a labeled synthetic market dataset"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="key = value config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--tenors", default=None, help="comma list of tenor days")
        cmd.add_argument(
            "--lambda-policy", default=None, dest="lambda_policy",
            help="penalty weight: n or const:<v>",
        )
        cmd.add_argument(
            "--aggregation", default=None, choices=("pool", "median"),
            help="daily aggregation policy",
        )
        if name == "synth":
            cmd.add_argument("--truth", default=None, help="truth spec file")
    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("CURVES_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_pipeline_config(args.config)
        cfg = apply_overrides(
            cfg,
            seed=args.seed,
            tenors=args.tenors,
            lambda_policy=args.lambda_policy,
            aggregation=args.aggregation,
        )
        if args.command == "ingest":
            report = run_ingest(cfg)
            print(
                f"ingest: {report.files} files, {report.rows_ok} rows across "
                f"{report.days} days, {report.rows_rejected} rejected"
            )
        elif args.command == "estimate":
            report = run_estimate(cfg)
            print(
                f"estimate: {report.rows} curve rows over {report.days} days, "
                f"{report.rejections} rejections"
            )
        elif args.command == "tenors":
            report = run_tenors(cfg)
            print(f"tenors: {report.rows} rows across {report.dates} dates")
        elif args.command == "plot":
            from .plots import run_plot

            written = run_plot(cfg)
            print(f"plot: wrote {len(written)} figures under {cfg.output_dir / 'plots'}")
        elif args.command == "synth":
            truth_path = args.truth or cfg.truth_file
            if truth_path is None:
                raise ConfigError("synth needs --truth or synth.truth_file in the config")
            spec = load_truth_spec(truth_path, seed_override=args.seed)
            report = run_synth(cfg, spec)
            print(
                f"synth: {report.rows} rows, {report.pairs} pairs "
                f"({report.outliers} outliers), {report.excluded} strikes excluded"
            )
    except (CurveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
